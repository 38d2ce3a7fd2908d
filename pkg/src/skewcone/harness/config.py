"""Experiment configuration: one versioned JSON document per run.

Systems and checks are discriminated unions, so a malformed document fails
with a field path (``checks.2.omega-capture.horizons``) rather than deep
inside a numerical routine.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Annotated, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..errors import ConfigurationError
from ..forcing import RotationVector
from ..parabolic import CHEMO_C

SCHEMA_VERSION = 1
SQRT2 = math.sqrt(2.0)
DEFAULT_ROTATION = (1.0, SQRT2)

# constants baked into the reference parabolic problems
NONLOCAL_XI = 1.0
NONLOCAL_C_NU = 1.0
CHEMO_XI = 7.0


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


def _check_rotation(v):
    try:
        RotationVector(tuple(v))
    except ValueError as exc:
        raise ValueError(str(exc)) from None
    return tuple(float(w) for w in v)


# -- systems --


class TridiagSystem(_Model):
    kind: Literal["tridiag"] = "tridiag"
    preset: Literal["cubic-pair", "chain5", "pitchfork", "noncoop-control"]
    forcing_amplitude: float = Field(0.05, ge=0.0)
    rotation: tuple[float, ...] = DEFAULT_ROTATION
    eps: float = 0.0

    _rot = field_validator("rotation")(_check_rotation)

    @model_validator(mode="after")
    def _eps_bound(self):
        # the global perturbation has sup norm 1; the presets dissipate at rate 0.1
        if self.eps != 0.0 and self.preset in ("cubic-pair", "chain5") and not abs(self.eps) < 0.1:
            raise ValueError(f"eps = {self.eps} violates the box condition bound |eps| * M_g < delta = 0.1")
        return self


class LinearTestSystem(_Model):
    kind: Literal["linear-test"] = "linear-test"
    matrix: tuple[tuple[float, ...], ...] = ((-SQRT2, 1.0, 0.0), (1.0, -SQRT2, 1.0), (0.0, 1.0, -SQRT2))
    delta: float = Field(0.01, gt=0.0, lt=1.0)
    eps: float = Field(0.0, ge=0.0)
    rotation: tuple[float, ...] = DEFAULT_ROTATION

    _rot = field_validator("rotation")(_check_rotation)

    @field_validator("matrix")
    @classmethod
    def _square(cls, m):
        n = len(m)
        if n == 0 or any(len(row) != n for row in m):
            raise ValueError("matrix must be square and nonempty")
        if not all(math.isfinite(v) for row in m for v in row):
            raise ValueError("matrix entries must be finite")
        return m


class NonlocalSystem(_Model):
    kind: Literal["parabolic-nonlocal"] = "parabolic-nonlocal"
    N: int = Field(32, ge=8)
    eps: float = 0.5

    @model_validator(mode="after")
    def _eps_bound(self):
        bound = NONLOCAL_XI / NONLOCAL_C_NU
        if not 0.0 <= self.eps < bound:
            raise ValueError(f"eps = {self.eps} violates the nonlocal feasibility bound "
                             f"0 <= eps < xi / (||c|| ||nu||) = {bound:g}")
        return self


class ChemotaxisSystem(_Model):
    kind: Literal["parabolic-chemotaxis"] = "parabolic-chemotaxis"
    N: int = Field(32, ge=8)
    eps: float = 0.1

    @model_validator(mode="after")
    def _eps_bound(self):
        bound = CHEMO_XI / (CHEMO_C + 1.0)
        if not abs(self.eps) < bound:
            raise ValueError(f"eps = {self.eps} violates the chemotaxis feasibility bound "
                             f"|eps| < xi / (C + 1) = {bound:.6g}")
        return self


class HeatSystem(_Model):
    kind: Literal["parabolic-heat"] = "parabolic-heat"
    N: int = Field(64, ge=8)
    bc: Literal["neumann", "dirichlet"] = "neumann"


class BistableSystem(_Model):
    kind: Literal["parabolic-bistable"] = "parabolic-bistable"
    N: int = Field(128, ge=8)


System = Annotated[
    Union[TridiagSystem, LinearTestSystem, NonlocalSystem, ChemotaxisSystem, HeatSystem, BistableSystem],
    Field(discriminator="kind"),
]

ODE_KINDS = ("tridiag", "linear-test")


# -- checks --


class DifferenceIdentity(_Model):
    name: Literal["difference-identity"] = "difference-identity"
    samples: int = Field(100, ge=1)
    times: tuple[float, ...] = (0.5, 1.0, 2.0, 5.0)
    tol: float = Field(1e-8, gt=0.0)
    composition_tol: float = Field(1e-8, gt=0.0)
    box: float = Field(2.0, gt=0.0)


class SigmaMonotonicity(_Model):
    name: Literal["sigma-monotonicity"] = "sigma-monotonicity"
    samples: int = Field(100, ge=1)
    horizon: float = Field(20.0, gt=0.0)
    dt: float = Field(0.05, gt=0.0)
    tol: float = Field(1e-8, gt=0.0)
    box: float = Field(2.0, gt=0.0)


class AxiomBattery(_Model):
    name: Literal["axiom-battery"] = "axiom-battery"
    samples: int = Field(20, ge=1)
    t_min: float = Field(0.5, gt=0.0)
    horizon: float = Field(2.0, gt=0.0)
    times: int = Field(4, ge=1)
    box: float = Field(2.0, gt=0.0)
    tol: float = Field(1e-9, gt=0.0)
    expect: dict[Literal["H1", "H3", "H4", "H5"], Literal["pass", "fail"]] = Field(
        default_factory=lambda: {"H1": "pass", "H3": "pass", "H4": "pass", "H5": "pass"})


class DissipativeBox(_Model):
    name: Literal["dissipative-box"] = "dissipative-box"
    samples: int = Field(100, ge=1)
    start_radius: float = Field(5.0, gt=0.0)
    horizon: float = Field(20.0, gt=0.0)
    dt: float = Field(0.05, gt=0.0)


class SplittingOracle(_Model):
    name: Literal["splitting-oracle"] = "splitting-oracle"
    sizes: tuple[int, ...] | None = None
    horizon: int = Field(60, ge=1)
    angle_tol: float = 1e-6
    gap_tol: float = 1e-4


class ConeConstants(_Model):
    name: Literal["cone-constants"] = "cone-constants"
    horizon: int = Field(40, ge=1)
    samples: int = Field(10_000, ge=10)
    transport_count: int = Field(1000, ge=1)
    slack: float = 1e-6


class PerturbedCone(_Model):
    name: Literal["perturbed-cone"] = "perturbed-cone"
    horizon: int = Field(40, ge=1)
    samples: int = Field(2000, ge=10)
    suite_samples: int = Field(100, ge=1)
    seeds: int = Field(2, ge=1)


class Eps1Search(_Model):
    name: Literal["eps1-search"] = "eps1-search"
    horizon: int = Field(40, ge=1)
    samples: int = Field(2000, ge=10)
    grid_min: float = Field(1e-6, gt=0.0)
    grid_max: float = Field(1.0, gt=0.0)
    grid_points: int = Field(25, ge=2)
    search_seeds: int = Field(2, ge=1)
    verify_seeds: int = Field(3, ge=1)
    suite_samples: int = Field(100, ge=1)
    stress_factor: float = Field(100.0, gt=1.0)

    @model_validator(mode="after")
    def _grid(self):
        if self.grid_max <= self.grid_min:
            raise ValueError("grid_max must exceed grid_min")
        return self


class DichotomyPairs(_Model):
    name: Literal["dichotomy-pairs"] = "dichotomy-pairs"
    starts: int = Field(50, ge=2)
    start_range: tuple[float, float] = (1.0, 3.0)
    horizon: float = Field(20.0, gt=0.0)
    points: int = Field(81, ge=4)
    tol: float = Field(1e-8, gt=0.0)
    expect_index: int = Field(1, ge=1)


class DichotomyDecay(_Model):
    name: Literal["dichotomy-decay"] = "dichotomy-decay"
    horizon: int = Field(40, ge=1)
    samples: int = Field(2000, ge=10)
    span: float = Field(10.0, gt=0.0)
    points: int = Field(41, ge=4)
    rate_tol: float = Field(0.05, gt=0.0)


class OmegaCapture(_Model):
    name: Literal["omega-capture"] = "omega-capture"
    x0: tuple[float, ...] = (2.0,)
    horizons: tuple[float, ...] = (2000.0, 4000.0)
    references: int = Field(20, ge=1)
    transient_cut: float = Field(50.0, ge=0.0)
    eta: float = Field(0.2, gt=0.0)
    realign: float = Field(5.0, ge=0.0)
    tol: float = Field(1e-10, gt=0.0)
    diameter_tol: float = Field(1e-3, gt=0.0)
    cluster_radius: float = Field(3e-3, gt=0.0)
    min_fraction: float = Field(0.95, ge=0.0, le=1.0)

    @field_validator("horizons")
    @classmethod
    def _increasing(cls, h):
        if not h or any(b <= a for a, b in zip(h, h[1:])):
            raise ValueError("horizons must be a nonempty increasing list")
        return h


class NonlocalBound(_Model):
    name: Literal["nonlocal-bound"] = "nonlocal-bound"
    starts: int = Field(50, ge=1)
    T: float = Field(10.0, gt=0.0)
    points: int = Field(41, ge=2)
    slack: float = Field(0.05, ge=0.0)
    tol: float = Field(1e-7, gt=0.0)


class ChemotaxisBound(_Model):
    name: Literal["chemotaxis-bound"] = "chemotaxis-bound"
    starts: int = Field(10, ge=1)
    horizon: float = Field(5.0, gt=0.0)
    points: int = Field(51, ge=2)
    residual_tol: float = Field(1e-6, gt=0.0)
    tol: float = Field(1e-7, gt=0.0)


class HeatConvergence(_Model):
    name: Literal["heat-convergence"] = "heat-convergence"
    doublings: int = Field(1, ge=1, le=6)
    t: float = Field(0.1, gt=0.0)
    ratio: float = 4.0
    ratio_tol: float = Field(0.5, gt=0.0)


class ZeroNumber(_Model):
    name: Literal["zero-number"] = "zero-number"
    runs: int = Field(20, ge=1)
    horizon: float = Field(0.5, gt=0.0)
    points: int = Field(51, ge=2)
    amplitude: float = Field(1.0, gt=0.0)
    tol: float = Field(1e-8, gt=0.0)


Check = Annotated[
    Union[DifferenceIdentity, SigmaMonotonicity, AxiomBattery, DissipativeBox, SplittingOracle, ConeConstants,
          PerturbedCone, Eps1Search, DichotomyPairs, DichotomyDecay, OmegaCapture, NonlocalBound,
          ChemotaxisBound, HeatConvergence, ZeroNumber],
    Field(discriminator="name"),
]

# which system kinds each check accepts
CHECK_SYSTEMS = {
    "difference-identity": ODE_KINDS,
    "sigma-monotonicity": ODE_KINDS,
    "axiom-battery": ODE_KINDS,
    "dissipative-box": ("tridiag",),
    "splitting-oracle": ("linear-test",),
    "cone-constants": ("linear-test",),
    "perturbed-cone": ("linear-test",),
    "eps1-search": ("linear-test",),
    "dichotomy-pairs": ("tridiag",),
    "dichotomy-decay": ("linear-test",),
    "omega-capture": ("tridiag",),
    "nonlocal-bound": ("parabolic-nonlocal",),
    "chemotaxis-bound": ("parabolic-chemotaxis",),
    "heat-convergence": ("parabolic-heat",),
    "zero-number": ("parabolic-bistable",),
}


class ExperimentConfig(_Model):
    """A whole run: one system, an ordered list of checks, one seed."""

    schema_version: Literal[1]
    name: str = Field(min_length=1)
    seed: int = Field(ge=0, lt=2**64)
    system: System
    checks: tuple[Check, ...] = Field(min_length=1)
    output_dir: str | None = None
    description: str = ""

    @model_validator(mode="after")
    def _compatible(self):
        kind = self.system.kind
        seen = set()
        for k, check in enumerate(self.checks):
            if kind not in CHECK_SYSTEMS[check.name]:
                raise ValueError(f"checks.{k}: check {check.name!r} does not apply to system kind {kind!r}")
            if check.name in seen:
                raise ValueError(f"checks.{k}: check {check.name!r} is listed twice")
            seen.add(check.name)
        if kind == "tridiag":
            names = {c.name for c in self.checks}
            if self.system.preset != "pitchfork" and names & {"omega-capture", "dichotomy-pairs"}:
                raise ValueError("omega-capture and dichotomy-pairs are defined for the pitchfork preset")
            if self.system.preset == "pitchfork" and "dissipative-box" in names:
                raise ValueError("the pitchfork preset declares no box constants")
        return self

    def body(self) -> dict:
        """Canonical content used for hashing; output location is excluded."""
        d = self.model_dump(mode="json")
        d.pop("output_dir", None)
        return d

    def config_hash(self) -> str:
        text = json.dumps(self.body(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def _format_errors(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        path = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{path}: {err['msg']}")
    return "; ".join(lines)


def parse_config(data: dict) -> ExperimentConfig:
    """Validate a config mapping; errors become ConfigurationError with field paths."""
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigurationError(_format_errors(exc)) from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigurationError(f"config file {path} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(data)


__all__ = [
    "CHECK_SYSTEMS", "ExperimentConfig", "SCHEMA_VERSION", "load_config", "parse_config",
]
