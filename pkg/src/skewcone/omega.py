"""Omega-limit capture and structural classification of long-time behaviour.

Fibers of an omega-limit set over a reference base point are sampled at the
times the base orbit returns near that point.  Each sample is base-aligned:
the stored state ``realign`` time units before the return is re-integrated
over the exact reference base orbit, so the base mismatch of the return is
damped by the dynamics instead of widening the fiber.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage

from .cones import hyperplane_split, sigma
from .errors import ConfigurationError, InsufficientRecurrenceError, PreconditionError
from .forcing import TorusPoint, return_times
from .ode import solve
from .tridiag import Orbit, TridiagSpec

MIN_RETURNS = 10
RECURRENCE_FRACTION = 0.8

SINGLE = "single-minimal"
CONNECTOR = "minimal-plus-connector"
TWO = "two-minimal-plus-connector"
INCONCLUSIVE = "inconclusive"


# -- capture --


@dataclass
class FiberCloud:
    """Base-aligned states over one reference base point."""

    reference: TorusPoint
    times: np.ndarray
    points: np.ndarray  # (returns, n)

    def s_coordinates(self) -> np.ndarray:
        return np.array([hyperplane_split(p).s for p in self.points])


@dataclass
class OmegaClouds:
    fibers: list
    eta: float
    realign: float
    transient_cut: float
    horizon: float
    skipped_references: int = 0

    def to_csv(self, path) -> Path:
        """Rows: theta-sample id, return time, s-coordinate, state components."""
        path = Path(path)
        n = self.fibers[0].points.shape[1] if self.fibers else 0
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["theta_id", "t", "s"] + [f"x_{i + 1}" for i in range(n)])
            for j, fib in enumerate(self.fibers):
                for t, p in zip(fib.times, fib.points):
                    writer.writerow([j, repr(float(t)), repr(float(p[0]))] + [repr(float(v)) for v in p])
        return path


def _aligned_states(spec: TridiagSpec, orbit: Orbit, refs, rts, realign: float, tol: float):
    starts, angles = [], []
    omega = spec.rotation.as_array()
    for ref, times in zip(refs, rts):
        starts.append(np.atleast_2d(orbit.dense(times - realign)).reshape(len(times), spec.n))
        a = ref.as_array() - omega * realign
        angles.append(np.repeat(a[:, None], len(times), axis=1))
    x0 = np.concatenate(starts, axis=0).T
    a0 = np.concatenate(angles, axis=1)
    if realign <= 0:
        return x0.T
    sol = solve(spec.rhs(a0), (0.0, realign), x0, tol=tol)
    return sol.y_eval[-1].T


def capture_omega(spec: TridiagSpec, orbit: Orbit, references, transient_cut: float, eta: float = 0.2,
                  realign: float = 5.0, tol: float = 1e-9, min_returns: int = MIN_RETURNS) -> OmegaClouds:
    """Sample omega-limit fibers of ``orbit`` over each reference base point.

    ``orbit`` must carry dense output (``integrate(..., dense=True)``).
    Raises InsufficientRecurrenceError when a reference has fewer than
    ``min_returns`` returns after ``transient_cut``.
    """
    if not hasattr(orbit, "dense"):
        raise ConfigurationError("capture needs an orbit integrated with dense output")
    t_end = float(orbit.t_grid[-1])
    lo = max(transient_cut, float(orbit.t_grid[0]) + realign)
    if lo >= t_end:
        raise PreconditionError("transient cut leaves no time for returns")
    rts = []
    for ref in references:
        times = return_times(orbit.theta0, spec.rotation, ref, eta, lo, t_end)
        if len(times) < min_returns:
            raise InsufficientRecurrenceError(
                f"only {len(times)} returns within eta={eta} after t={lo:.4g} (need {min_returns})")
        rts.append(times)
    states = _aligned_states(spec, orbit, references, rts, realign, tol)
    fibers, k = [], 0
    for ref, times in zip(references, rts):
        fibers.append(FiberCloud(ref, times, states[k:k + len(times)]))
        k += len(times)
    return OmegaClouds(fibers, eta, realign, transient_cut, t_end)


def sample_references(spec: TridiagSpec, orbit: Orbit, count: int, rng: np.random.Generator,
                      transient_cut: float, eta: float = 0.2, realign: float = 5.0,
                      min_returns: int = MIN_RETURNS, max_draws: int | None = None) -> tuple[list, int]:
    """Random reference points with enough returns; returns (references, skipped draws)."""
    max_draws = max_draws or 20 * count
    lo = max(transient_cut, float(orbit.t_grid[0]) + realign)
    t_end = float(orbit.t_grid[-1])
    refs, skipped = [], 0
    for _ in range(max_draws):
        if len(refs) == count:
            break
        ref = TorusPoint(tuple(rng.uniform(0, 2 * math.pi, size=spec.rotation.m)))
        if len(return_times(orbit.theta0, spec.rotation, ref, eta, lo, t_end)) >= min_returns:
            refs.append(ref)
        else:
            skipped += 1
    if len(refs) < count:
        raise InsufficientRecurrenceError(f"found {len(refs)} of {count} references with enough returns")
    return refs, skipped


def capture_sampled(spec: TridiagSpec, orbit: Orbit, count: int, rng: np.random.Generator,
                    transient_cut: float, eta: float = 0.2, realign: float = 5.0, tol: float = 1e-9) -> OmegaClouds:
    refs, skipped = sample_references(spec, orbit, count, rng, transient_cut, eta, realign)
    clouds = capture_omega(spec, orbit, refs, transient_cut, eta, realign, tol)
    clouds.skipped_references = skipped
    return clouds


# -- clustering and classification --


@dataclass
class FiberStats:
    cluster_count: int
    diameters: list
    sizes: list
    s_ranges: list
    recurrent: list

    def to_dict(self) -> dict:
        return asdict_safe(self)


def asdict_safe(obj) -> dict:
    out = {}
    for k, v in obj.__dict__.items():
        if isinstance(v, np.ndarray):
            v = v.tolist()
        out[k] = v
    return out


def cluster_fiber(points: np.ndarray, radius: float) -> np.ndarray:
    """Single-linkage labels at ``radius``, relabelled by increasing mean s."""
    points = np.asarray(points, dtype=float)
    if len(points) == 1:
        return np.zeros(1, dtype=int)
    raw = fcluster(linkage(points, method="single"), t=radius, criterion="distance")
    means = {lab: points[raw == lab, 0].mean() for lab in np.unique(raw)}
    order = sorted(means, key=means.get)
    remap = {lab: j for j, lab in enumerate(order)}
    return np.array([remap[lab] for lab in raw])


def _diameter(points: np.ndarray) -> float:
    if len(points) < 2:
        return 0.0
    diff = points[:, None, :] - points[None, :, :]
    return float(np.max(np.linalg.norm(diff, axis=-1)))


def fiber_statistics(fiber: FiberCloud, radius: float, windows: int = 5) -> FiberStats:
    """Clusters of one fiber; a cluster is recurrent when it has members in
    at least 80% of equal-count windows of the return sequence."""
    labels = cluster_fiber(fiber.points, radius)
    count = int(labels.max()) + 1
    windows = max(1, min(windows, len(labels)))
    window_id = np.floor(np.arange(len(labels)) * windows / len(labels)).astype(int)
    s = fiber.points[:, 0]
    diam, sizes, ranges, recurrent = [], [], [], []
    for c in range(count):
        mask = labels == c
        diam.append(_diameter(fiber.points[mask]))
        sizes.append(int(mask.sum()))
        ranges.append([float(s[mask].min()), float(s[mask].max())])
        visited = len(np.unique(window_id[mask]))
        recurrent.append(bool(visited >= RECURRENCE_FRACTION * windows))
    return FiberStats(count, diam, sizes, ranges, recurrent)


@dataclass
class OmegaReport:
    classification: str
    minimal_count: int
    fiber_stats: list
    gap: float | None
    evidence: dict = field(default_factory=dict)
    connector_check: str = "unevaluated"

    def __post_init__(self):
        if self.classification != INCONCLUSIVE and self.minimal_count > 2:
            raise ValueError("a conclusive report holds at most two minimal sets")

    def to_dict(self) -> dict:
        return {
            "classification": self.classification,
            "minimal_count": self.minimal_count,
            "gap": self.gap,
            "fiber_stats": [fs.to_dict() for fs in self.fiber_stats],
            "evidence": self.evidence,
            "connector_check": self.connector_check,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def classify_trichotomy(clouds: OmegaClouds, radius: float = 3e-3) -> OmegaReport:
    """Classify the sampled omega-limit set into the three structural branches.

    Per fiber, recurrent clusters are minimal candidates and the rest are
    connector points.  The minimal count is the largest recurrent count over
    fibers; more than two, or none, yields 'inconclusive'.  With two
    candidates the gap is the smallest ``m2 - M1`` over fibers.
    """
    stats = [fiber_statistics(f, radius) for f in clouds.fibers]
    rec_counts = [sum(fs.recurrent) for fs in stats]
    extra = [fs.cluster_count - sum(fs.recurrent) for fs in stats]
    minimal = max(rec_counts) if rec_counts else 0
    evidence = {
        "eta": clouds.eta, "realign": clouds.realign, "transient_cut": clouds.transient_cut,
        "horizon": clouds.horizon, "returns": [len(f.times) for f in clouds.fibers],
        "skipped_references": clouds.skipped_references,
    }
    gap = None
    if minimal == 0 or minimal > 2 or min(rec_counts) == 0:
        return OmegaReport(INCONCLUSIVE, minimal, stats, None, evidence)
    if minimal == 2:
        gaps = []
        for fs in stats:
            rec = [r for r, flag in zip(fs.s_ranges, fs.recurrent) if flag]
            if len(rec) == 2:
                gaps.append(rec[1][0] - rec[0][1])
        gap = float(min(gaps)) if gaps else None
        if gap is None or gap <= 0:
            return OmegaReport(INCONCLUSIVE, minimal, stats, gap, evidence)
        return OmegaReport(TWO, 2, stats, gap, evidence)
    if any(extra):
        return OmegaReport(CONNECTOR, 1, stats, None, evidence)
    return OmegaReport(SINGLE, 1, stats, None, evidence)


@dataclass(frozen=True)
class CoverResult:
    fraction_single: float
    max_fiber_diameter: float
    fibers: int

    def to_dict(self) -> dict:
        return {"fraction_single": self.fraction_single, "max_fiber_diameter": self.max_fiber_diameter,
                "fibers": self.fibers}


def almost_one_cover_test(clouds: OmegaClouds, diameter_tol: float = 1e-3, radius: float | None = None) -> CoverResult:
    """Fraction of fibers holding one cluster of diameter below ``diameter_tol``."""
    radius = 3.0 * diameter_tol if radius is None else radius
    single, worst = 0, 0.0
    for fib in clouds.fibers:
        labels = cluster_fiber(fib.points, radius)
        d = _diameter(fib.points)
        worst = max(worst, d)
        if labels.max() == 0 and d < diameter_tol:
            single += 1
    n = len(clouds.fibers)
    return CoverResult(single / n if n else 0.0, worst, n)


# -- exponential dichotomy of differences --


class SignConeFamily:
    """Sign-change cones ``C_i``; the family covers the whole space (N0 = n)."""

    def __init__(self, n: int, tol: float = 1e-9):
        self.n0 = n
        self.tol = tol

    def interior_index(self, u) -> tuple[int | None, bool]:
        """Smallest i with u interior to C_i; ``clean`` iff u is regular."""
        u = np.asarray(u, dtype=float)
        if not np.any(u):
            return None, False
        res = sigma(u, self.tol)
        return min(res.sigma_max + 1, self.n0), res.regular


@dataclass
class DichotomyVerdict:
    branch: str
    rate: float | None = None
    lock_index: int | None = None
    onset: float | None = None
    h_crossings: int = 0
    samples: int = 0

    def __post_init__(self):
        if self.branch not in ("decay", "cone_lock", INCONCLUSIVE):
            raise ValueError(f"unknown branch {self.branch!r}")
        if self.branch == "decay" and self.lock_index is not None:
            raise ValueError("a decay verdict carries no lock index")

    def to_dict(self) -> dict:
        rate = self.rate
        if rate is not None and not math.isfinite(rate):
            rate = "-inf"
        return {"branch": self.branch, "rate": rate, "lock_index": self.lock_index, "onset": self.onset,
                "h_crossings": self.h_crossings, "samples": self.samples}


def _suffix_start(flags: np.ndarray) -> int:
    """Start of the longest all-true suffix (len(flags) when the last is false)."""
    k = len(flags)
    while k > 0 and flags[k - 1]:
        k -= 1
    return k


def dichotomy_check(t_grid, differences, family, log_lambda0: float | None = None, fit_tol: float = 0.05,
                    min_tail: float = 0.25, states=None, box: float | None = None) -> DichotomyVerdict:
    """Decide which branch of the dichotomy a difference trajectory follows.

    ``differences`` has shape (len(t_grid), n) (propagate the difference
    with the cocycle to keep relative precision).  A branch must hold on a
    suffix covering at least ``min_tail`` of the samples.  Cone lock:
    constant minimal interior index with a clean verdict.  Decay: outside
    the largest cone with log-slope at most ``log_lambda0 + fit_tol``.
    """
    t = np.asarray(t_grid, dtype=float)
    d = np.asarray(differences, dtype=float).reshape(len(t), -1)
    if states is not None and box is not None:
        if np.any(np.abs(np.asarray(states)) > box):
            raise PreconditionError(f"orbit leaves the certified box |x| <= {box}")
    norms = np.linalg.norm(d, axis=1)
    if not np.any(norms):
        return DichotomyVerdict("decay", rate=-math.inf, samples=len(t))
    verdicts = [family.interior_index(row) for row in d]
    idx = [v[0] for v in verdicts]
    clean = np.array([v[1] for v in verdicts])
    need = max(2, int(math.ceil(min_tail * len(t))))
    last = idx[-1]
    if last is not None:
        flags = np.array([i == last for i in idx]) & clean
        k = _suffix_start(flags)
        if len(t) - k >= need:
            # normalise first: the side test must not depend on the decay of |d|
            sides = [hyperplane_split(row / nrm).side for row, nrm in zip(d[k:], norms[k:])]
            crossings = sum(1 for s in sides if s == "H") + sum(1 for a, b in zip(sides, sides[1:]) if a != b)
            return DichotomyVerdict("cone_lock", lock_index=int(last), onset=float(t[k]),
                                    h_crossings=int(crossings), samples=len(t))
        return DichotomyVerdict(INCONCLUSIVE, samples=len(t))
    flags = np.array([i is None for i in idx]) & (norms > 0)
    k = _suffix_start(flags)
    if len(t) - k >= need:
        slope = float(np.polyfit(t[k:], np.log(norms[k:]), 1)[0])
        if log_lambda0 is None or slope <= log_lambda0 + fit_tol:
            return DichotomyVerdict("decay", rate=slope, onset=float(t[k]), samples=len(t))
    return DichotomyVerdict(INCONCLUSIVE, samples=len(t))


__all__ = [
    "CONNECTOR", "CoverResult", "DichotomyVerdict", "FiberCloud", "FiberStats", "INCONCLUSIVE",
    "OmegaClouds", "OmegaReport", "SINGLE", "SignConeFamily", "TWO", "almost_one_cover_test",
    "capture_omega", "capture_sampled", "classify_trichotomy", "cluster_fiber", "dichotomy_check",
    "fiber_statistics", "sample_references",
]
