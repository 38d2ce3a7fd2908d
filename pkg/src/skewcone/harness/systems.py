"""Concrete systems behind the config descriptors."""

from __future__ import annotations

import numpy as np

from ..cocycle import ConstantCocycle
from ..forcing import RotationVector, quasi_periodic
from ..parabolic import bistable_spec, chemotaxis_spec, heat_spec, nonlocal_spec
from ..tridiag import TridiagSpec, cubic_chain, linear_system

# box constants (delta, C) of the cooperative presets
PAIR_DISSIPATION = (0.1, 2.0)
CHAIN_DISSIPATION = (0.1, 2.0)
NONCOOP_MATRIX = ((-np.sqrt(2.0), -1.0, 0.0), (1.0, -np.sqrt(2.0), 1.0), (0.0, 1.0, -np.sqrt(2.0)))


def build_tridiag(cfg) -> TridiagSpec:
    rot = RotationVector(tuple(cfg.rotation))
    eps = cfg.eps
    pert = "global" if eps != 0.0 else None
    if cfg.preset == "cubic-pair":
        return cubic_chain(2, forcing=quasi_periodic(cfg.forcing_amplitude, rot, 2), eps=eps, perturbation=pert,
                           dissipation=PAIR_DISSIPATION, name="cubic-pair")
    if cfg.preset == "chain5":
        return cubic_chain(5, forcing=quasi_periodic(cfg.forcing_amplitude, rot, 5), eps=eps, perturbation=pert,
                           dissipation=CHAIN_DISSIPATION, name="chain5")
    if cfg.preset == "pitchfork":
        return cubic_chain(1, linear=1.0, cubic=1.0, forcing=quasi_periodic(cfg.forcing_amplitude, rot, 1, box=5.0),
                           eps=eps, perturbation=pert, name="pitchfork")
    if cfg.preset == "noncoop-control":
        # sign-inconsistent first link: no gauge makes it cooperative
        return linear_system(NONCOOP_MATRIX, rotation=rot, name="noncoop-control")
    raise ValueError(f"unknown preset {cfg.preset!r}")


def build_linear(cfg) -> TridiagSpec:
    return linear_system(np.array(cfg.matrix), rotation=RotationVector(tuple(cfg.rotation)), name="linear-test")


def build_ode(cfg) -> TridiagSpec:
    return build_tridiag(cfg) if cfg.kind == "tridiag" else build_linear(cfg)


def constant_cocycle(cfg) -> ConstantCocycle:
    return ConstantCocycle(np.array(cfg.matrix))


def build_parabolic(cfg):
    if cfg.kind == "parabolic-nonlocal":
        return nonlocal_spec(cfg.N, cfg.eps)
    if cfg.kind == "parabolic-chemotaxis":
        return chemotaxis_spec(cfg.N, cfg.eps)
    if cfg.kind == "parabolic-heat":
        return heat_spec(cfg.N, cfg.bc)
    if cfg.kind == "parabolic-bistable":
        return bistable_spec(cfg.N)
    raise ValueError(f"not a parabolic system: {cfg.kind!r}")
