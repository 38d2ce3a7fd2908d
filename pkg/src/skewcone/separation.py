"""Numerical exponential separation and the perturbed nested-cone family.

A cocycle is anything with ``n`` and ``step(t0, dt) -> matrix`` (see
``cocycle.ConstantCocycle`` / ``TridiagCocycle`` / ``PerturbedCocycle``).
Splittings are computed on a unit-time grid: forward QR iteration gives the
dominant frames ``V^i``, adjoint QR iteration run backward gives ``L^i``,
and ``P^i = V (L^T V)^{-1} L^T`` projects onto ``V^i`` along ``Anih(L^i)``.
Every quantifier over cones or spheres is discharged on samples; reports
always state the sample counts.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.linalg import null_space, subspace_angles
from scipy.optimize import minimize

from .cocycle import evolve
from .errors import (DegenerateGeometryError, DegenerateSplittingError, InfeasibleParametersError,
                     PreconditionError)

MIN_GAP = 1e-3
RESTART_ANGLE_TOL = 1e-6


def _qr_pos(a: np.ndarray):
    """QR with a nonnegative R diagonal, so frames are sign-stable."""
    q, r = np.linalg.qr(a)
    d = np.sign(np.diag(r))
    d[d == 0] = 1.0
    return q * d, (r.T * d).T


def projector(v: np.ndarray, l: np.ndarray) -> np.ndarray:
    """Projection onto span(v) along the annihilator of span(l)."""
    if v.shape[1] == 0:
        return np.zeros((v.shape[0], v.shape[0]))
    return v @ np.linalg.solve(l.T @ v, l.T)


def spectral_norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(a, 2)) if a.size else 0.0


@dataclass
class Splitting:
    """Dominant ``k``-dimensional splitting at one base sample."""

    index: int
    V: np.ndarray
    L: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    M: float
    gamma: float
    exponents: np.ndarray
    restart_angle: float = 0.0
    anchor: float = 0.0

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "V": self.V.tolist(),
            "L": self.L.tolist(),
            "M": self.M,
            "gamma": None if math.isinf(self.gamma) else self.gamma,
            "exponents": self.exponents.tolist(),
            "restart_angle": self.restart_angle,
            "anchor": self.anchor,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Splitting":
        v = np.array(d["V"], dtype=float).reshape(len(d["exponents"]), -1)
        l = np.array(d["L"], dtype=float).reshape(v.shape)
        p = projector(v, l)
        gamma = math.inf if d["gamma"] is None else d["gamma"]
        return cls(d["index"], v, l, p, np.eye(len(p)) - p, d["M"], gamma,
                   np.array(d["exponents"]), d["restart_angle"], d["anchor"])


@dataclass
class FramePath:
    """Full forward/adjoint frames at integer times ``t_start .. t_end``."""

    times: np.ndarray
    V: list
    L: list
    exponents: np.ndarray

    def projector(self, k: int, i: int) -> np.ndarray:
        return projector(self.V[k][:, :i], self.L[k][:, :i])


def frame_path(cocycle, t_start: int, t_end: int, warmup: int, rng: np.random.Generator) -> FramePath:
    """Forward and adjoint QR frames along ``[t_start, t_end]`` with unit steps.

    The forward iteration starts at ``t_start - warmup`` and the adjoint
    one at ``t_end + warmup``; ``warmup`` must dominate ``1/gamma``.
    Exponents are averaged over the second half of the forward run.
    """
    n = cocycle.n
    q, _ = _qr_pos(rng.standard_normal((n, n)))
    logs = []
    vs = []
    t = t_start - warmup
    steps = {}

    def step(k):
        if k not in steps:
            steps[k] = cocycle.step(float(k), 1.0)
        return steps[k]

    while t < t_start:
        q, r = _qr_pos(step(t) @ q)
        logs.append(np.log(np.abs(np.diag(r))))
        t += 1
    vs.append(q)
    while t < t_end:
        q, r = _qr_pos(step(t) @ q)
        logs.append(np.log(np.abs(np.diag(r))))
        t += 1
        vs.append(q)
    w, _ = _qr_pos(rng.standard_normal((n, n)))
    t = t_end + warmup
    while t > t_end:
        w, _ = _qr_pos(step(t - 1).T @ w)
        t -= 1
    ls = [w]
    while t > t_start:
        w, _ = _qr_pos(step(t - 1).T @ w)
        t -= 1
        ls.append(w)
    ls.reverse()
    logs = np.array(logs)
    tail = logs[len(logs) // 2:] if len(logs) > 1 else logs
    exps = tail.mean(axis=0) if len(tail) else np.zeros(n)
    return FramePath(np.arange(t_start, t_end + 1), vs, ls, exps)


def _fit_M(cocycle, path: FramePath, i: int, gamma: float) -> float:
    """Smallest M with ``|T w| <= M e^{-gamma t} |T v|`` for unit w, v on integer t.

    ``w`` ranges over ``Anih(L^i)`` and ``v`` over ``V^i`` at the path start.
    The propagated annihilator frame is re-projected every step so roundoff
    cannot leak into the dominant directions.
    """
    n = cocycle.n
    bq = null_space(path.L[0][:, :i].T)
    if bq.shape[1] == 0:
        return 0.0
    mv, mq = path.V[0][:, :i].copy(), bq.copy()
    t0 = int(path.times[0])
    best = 0.0
    for t in range(1, len(path.times)):
        s = cocycle.step(float(t0 + t - 1), 1.0)
        mv, mq = s @ mv, (np.eye(n) - path.projector(t, i)) @ (s @ mq)
        # rescale jointly to stay finite; the ratio is unaffected
        scale = np.linalg.norm(mv, 2)
        mv, mq = mv / scale, mq / scale
        top = np.linalg.svd(mq, compute_uv=False)[0]
        bottom = np.linalg.svd(mv, compute_uv=False)[-1]
        best = max(best, top / bottom * math.exp(gamma * t))
    return float(max(best, 1.0))


def compute_splittings(cocycle, horizon: int, restarts: int = 3, rng: np.random.Generator | None = None,
                       indices=None, anchor: int | None = None, fit_horizon: int | None = None) -> dict:
    """Splittings ``{i: Splitting}`` at the base sample ``z . anchor``.

    ``anchor`` defaults to ``horizon`` so the forward warm-up fits in
    ``[0, anchor]``; the adjoint run starts at ``anchor + fit_horizon +
    horizon``.  Restarts use fresh random frames; the largest principal
    angle between restarts is stored on each splitting.
    """
    rng = rng or np.random.default_rng(0)
    n = cocycle.n
    indices = list(range(1, n + 1)) if indices is None else list(indices)
    anchor = horizon if anchor is None else anchor
    fit_horizon = horizon if fit_horizon is None else fit_horizon
    main = frame_path(cocycle, anchor, anchor + fit_horizon, horizon, rng)
    paths = [frame_path(cocycle, anchor, anchor, horizon, rng) for _ in range(max(restarts, 1) - 1)]
    exps = main.exponents
    out = {}
    for i in indices:
        if not 1 <= i <= n:
            raise ValueError(f"index {i} outside 1..{n}")
        v = main.V[0][:, :i]
        l = main.L[0][:, :i]
        if i == n:
            out[i] = Splitting(i, v, l, np.eye(n), np.zeros((n, n)), 0.0, math.inf, exps, 0.0, float(anchor))
            continue
        gamma = float(exps[i - 1] - exps[i])
        if gamma < MIN_GAP:
            raise DegenerateSplittingError(f"growth gap {gamma:.3g} at index {i} is below {MIN_GAP}")
        if horizon < 20.0 / gamma:
            raise PreconditionError(f"horizon {horizon} is shorter than 20/gamma = {20.0 / gamma:.3g}")
        angle = 0.0
        for other in paths:
            angle = max(angle, float(np.max(subspace_angles(v, other.V[0][:, :i]))),
                        float(np.max(subspace_angles(l, other.L[0][:, :i]))))
        p = projector(v, l)
        m = _fit_M(cocycle, main, i, gamma)
        out[i] = Splitting(i, v, l, p, np.eye(n) - p, m, gamma, exps, angle, float(anchor))
    return out


def compute_splitting(cocycle, i: int, horizon: int, restarts: int = 3,
                      rng: np.random.Generator | None = None) -> Splitting:
    return compute_splittings(cocycle, horizon, restarts, rng, indices=[i])[i]


# -- constants ledger --


@dataclass
class ConeParams:
    N0: int
    delta: float
    delta0: float
    delta1: float
    lambda0: float
    lambda1: float
    zeta: float
    r: float
    c: float
    c_P: float
    c_Q: float
    M: float
    gamma: float
    T0: float
    T1: float
    certified_samples: int = 0

    def aperture(self, i: int) -> float:
        """``s_i = (2r)^{i - N0} delta`` of the nested family."""
        return (2.0 * self.r) ** (i - self.N0) * self.delta

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ConeParams":
        return cls(**d)


def lambda0_formula(delta: float, zeta: float, lambda1: float) -> float:
    return 2.0 * delta + (delta * zeta + math.sqrt(lambda1)) / (1.0 - delta)


def bisect_increasing(fun, lo: float, hi: float, tol: float = 1e-12, max_iter: int = 200) -> float:
    """Smallest x in [lo, hi] with fun(x) <= 0 for a decreasing predicate value."""
    if fun(lo) <= 0:
        return lo
    while fun(hi) > 0:
        hi = 2.0 * hi + 1.0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if fun(mid) <= 0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= tol * max(1.0, hi):
            break
    return hi


def solve_T1(c: float, M: float, gamma: float, r: float, N0: int, delta: float) -> float:
    """Smallest T1 >= 0 with ``c M e^{-gamma T1} <= (8r)^{-N0} delta`` (log form)."""
    rhs = -N0 * math.log(8.0 * r) + math.log(delta)
    if M <= 0 or math.isinf(gamma):
        return 0.0
    lhs0 = math.log(c * M)
    return bisect_increasing(lambda t: lhs0 - gamma * t - rhs, 0.0, 1.0)


def solve_T0(T1: float, lambda0: float, delta: float, zeta: float) -> float:
    """Smallest ``T0 >= T1 + 1`` beyond which ``(lambda0-delta)^{t-T1} (delta+zeta)^{T1} <= lambda0^t``.

    The log form is linear in t with negative slope, so the root found by
    bisection bounds the whole tail.
    """
    if lambda0 - delta <= 0:
        raise InfeasibleParametersError("lambda0 - delta must be positive")

    def excess(t):
        return (t - T1) * math.log(lambda0 - delta) + T1 * math.log(delta + zeta) - t * math.log(lambda0)

    root = bisect_increasing(excess, 0.0, 1.0)
    return max(root, math.nextafter(T1 + 1.0, math.inf))


def sup_norm_window(cocycle, anchors, t_values=None) -> float:
    """``max(sup ||T(t, z.a)||, 1)`` over ``t`` in [1/2, 1] and anchors ``a``."""
    t_values = np.linspace(0.5, 1.0, 11) if t_values is None else t_values
    best = 1.0
    for a in anchors:
        for t in t_values:
            best = max(best, spectral_norm(cocycle.step(float(a), float(t))))
    return best


def default_lambda1(exponents) -> float:
    """Geometric mean of the two smallest growth rates ``e^{mu}``."""
    mu = np.sort(np.asarray(exponents, dtype=float))
    if len(mu) == 1:
        return float(math.exp(mu[0]))
    return float(math.exp(0.5 * (mu[0] + mu[1])))


def find_N0(cocycle, path: FramePath, lambda1: float, rng: np.random.Generator, samples: int = 200) -> int:
    """Smallest ``i0`` with ``||T(t) u|| <= lambda1^t ||u||`` on ``Anih(L^{i0})`` samples.

    Checked for ``t`` in [1/2, 1] and on the integer times of ``path``,
    re-projecting onto the annihilator bundle each step.  ``i0 = n`` always
    qualifies (the annihilator is trivial).
    """
    n = cocycle.n
    t0 = int(path.times[0])
    for i in range(1, n):
        q_start = np.eye(n) - path.projector(0, i)
        u = q_start @ rng.standard_normal((n, samples))
        u /= np.linalg.norm(u, axis=0)
        ok = True
        for t in np.linspace(0.5, 1.0, 6):
            mat = cocycle.step(float(t0), float(t))
            if np.max(np.linalg.norm(mat @ u, axis=0)) > lambda1 ** t * (1 + 1e-9):
                ok = False
                break
        w = u.copy()
        logn = np.zeros(samples)
        for t in range(1, len(path.times)):
            if not ok:
                break
            w = (np.eye(n) - path.projector(t, i)) @ (cocycle.step(float(t0 + t - 1), 1.0) @ w)
            norms = np.linalg.norm(w, axis=0)
            logn += np.log(norms)
            w /= norms
            if np.max(logn) > t * math.log(lambda1) + 1e-9:
                ok = False
        if ok:
            return i
    return n


def compute_constants(cocycle, splittings_by_base: list, delta: float, lambda1: float | None = None,
                      truncation: bool = True, rng: np.random.Generator | None = None,
                      delta_grid=None, samples: int = 10_000) -> ConeParams:
    """Assemble the constants ledger from splittings at sampled base points.

    ``splittings_by_base`` is a list of ``{i: Splitting}`` dicts (all i=1..n).
    With ``truncation`` the cone count ``N0`` is the smallest index whose
    annihilator contracts at rate ``lambda1``; otherwise ``N0 = n``.
    """
    rng = rng or np.random.default_rng(0)
    n = cocycle.n
    if not splittings_by_base:
        raise PreconditionError("need at least one base sample")
    first = splittings_by_base[0]
    anchors = [int(round(s[1].anchor)) for s in splittings_by_base]
    exps = first[1].exponents
    lambda1 = default_lambda1(exps) if lambda1 is None else float(lambda1)
    if not 0 < lambda1 < 1:
        raise InfeasibleParametersError(f"lambda1 = {lambda1:.6g} must lie in (0, 1)")
    zeta = sup_norm_window(cocycle, anchors)
    lambda0 = lambda0_formula(delta, zeta, lambda1)
    if lambda0 >= 1:
        raise InfeasibleParametersError(f"lambda0 = {lambda0:.6g} >= 1 for delta = {delta}")
    if truncation:
        horizon = max(10, anchors[0])
        N0 = find_N0(cocycle, frame_path(cocycle, anchors[0], anchors[0] + horizon, horizon, rng), lambda1, rng)
    else:
        N0 = n
    idx = range(1, N0 + 1)
    c_P = max(spectral_norm(s[i].P) for s in splittings_by_base for i in idx)
    c_Q = max(spectral_norm(s[i].Q) for s in splittings_by_base for i in idx)
    r = max(c_P * c_Q, 1.0)
    proper = [i for i in idx if i < n]
    M = max((s[i].M for s in splittings_by_base for i in proper), default=0.0)
    gamma = min((s[i].gamma for s in splittings_by_base for i in proper), default=math.inf)
    delta0, delta1, certified = find_delta0_delta1(splittings_by_base, N0, rng, delta_grid, samples)
    if not delta < min(delta0, delta1 / (2.0 + delta1)):
        raise InfeasibleParametersError(
            f"delta = {delta} must be below min(delta0, delta1/(2+delta1)) = "
            f"{min(delta0, delta1 / (2.0 + delta1)):.6g}"
        )
    c = 1.0 / delta
    T1 = solve_T1(c, M, gamma, r, N0, delta)
    T0 = solve_T0(T1, lambda0, delta, zeta)
    return ConeParams(N0=N0, delta=delta, delta0=delta0, delta1=delta1, lambda0=lambda0, lambda1=lambda1,
                      zeta=zeta, r=r, c=c, c_P=c_P, c_Q=c_Q, M=M, gamma=gamma, T0=T0, T1=T1,
                      certified_samples=certified)


# -- cone sets C, D, W --


def cone_C_D_W_membership(u, splittings: dict, i: int, s: float, kind: str) -> tuple[bool, float]:
    """Evaluate the defining inequality of ``C^i(s)``, ``D^i(s)`` or ``W^i(s)``.

    Returns (member, margin) with margin = right-hand side minus left-hand side.
    ``W`` needs the splitting at ``i-1`` (index 0 means P = 0, Q = I).
    """
    u = np.asarray(u, dtype=float)
    p, q = splittings[i].P, splittings[i].Q
    if kind == "C":
        lhs, rhs = np.linalg.norm(q @ u), s * np.linalg.norm(p @ u)
    elif kind == "D":
        lhs, rhs = np.linalg.norm(p @ u), s * np.linalg.norm(q @ u)
    elif kind == "W":
        n = len(u)
        if i > 1:
            p0, q0 = splittings[i - 1].P, splittings[i - 1].Q
        else:
            p0, q0 = np.zeros((n, n)), np.eye(n)
        lhs = np.linalg.norm(q @ u + p0 @ u)
        rhs = s * np.linalg.norm(q0 @ (p @ u))
    else:
        raise ValueError(f"kind must be C, D or W, got {kind!r}")
    margin = float(rhs - lhs)
    return margin >= 0, margin


def _unit_samples(dim: int, count: int, rng) -> np.ndarray:
    u = rng.standard_normal((dim, count))
    return u / np.linalg.norm(u, axis=0)


def _min_over_sphere(fun, dim: int, rng, samples: int, polish: int = 20) -> float:
    """Minimum of a scale-invariant ``fun`` over unit vectors: samples plus local polish."""
    u = _unit_samples(dim, samples, rng)
    vals = fun(u)
    best = float(np.min(vals))
    if dim < 2:
        return best
    for j in np.argsort(vals)[:polish]:
        res = minimize(lambda x: float(fun((x / np.linalg.norm(x))[:, None])[0]), u[:, j],
                       method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 600})
        best = min(best, float(res.fun))
    return best


def _ratio(num, den):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), np.where(num > 0, np.inf, 0.0))


def critical_cd_aperture(a: Splitting, b: Splitting, rng, samples: int = 10_000) -> float:
    """Smallest s with ``C_a(s) cap D_b(s) != {0}`` (sampled and polished)."""
    def fun(u):
        c_need = _ratio(np.linalg.norm(a.Q @ u, axis=0), np.linalg.norm(a.P @ u, axis=0))
        d_need = _ratio(np.linalg.norm(b.P @ u, axis=0), np.linalg.norm(b.Q @ u, axis=0))
        return np.maximum(c_need, d_need)
    return _min_over_sphere(fun, a.P.shape[0], rng, samples)


def critical_hw_aperture(split: Splitting, prev: Splitting | None, rng, samples: int = 10_000) -> float:
    """Smallest s with ``H cap W_i(s) != {0}`` where ``H = {x_1 = 0}``."""
    n = split.P.shape[0]
    p0, q0 = (prev.P, prev.Q) if prev is not None else (np.zeros((n, n)), np.eye(n))
    basis = np.eye(n)[:, 1:]

    def fun(c):
        u = basis @ c
        return _ratio(np.linalg.norm(split.Q @ u + p0 @ u, axis=0), np.linalg.norm(q0 @ (split.P @ u), axis=0))
    return _min_over_sphere(fun, n - 1, rng, samples)


def _largest_below(grid, crit: float, cap=None) -> float:
    ok = grid[grid < crit]
    if len(ok) == len(grid) and cap is not None:
        return cap
    return float(ok.max()) if len(ok) else 0.0


def find_delta0_delta1(splittings_by_base: list, N0: int, rng: np.random.Generator, grid=None,
                       samples: int = 10_000) -> tuple[float, float, int]:
    """Largest grid apertures keeping ``C cap D`` and ``H cap W`` trivial on samples.

    For each pair of base samples and each index the critical aperture is
    minimised over the sphere; a grid value passes when it lies strictly
    below every critical aperture.  ``delta0`` is capped at 1: when every
    grid value in (0, 1) passes, 1 is returned.  Returns ``(delta0, delta1,
    samples_per_check)``.
    """
    grid = np.sort(np.asarray(grid if grid is not None else np.linspace(0.02, 0.98, 49), dtype=float))
    n = splittings_by_base[0][1].P.shape[0]
    proper = [i for i in range(1, N0 + 1) if i < n]
    crit0 = math.inf
    for a in splittings_by_base:
        for b in splittings_by_base:
            for i in proper:
                crit0 = min(crit0, critical_cd_aperture(a[i], b[i], rng, samples))
    delta0 = _largest_below(grid, crit0, cap=1.0)
    if delta0 == 0.0:
        raise DegenerateGeometryError("no grid aperture keeps C and D transversal")
    if n < 2:
        return delta0, math.inf, samples
    crit1 = math.inf
    for a in splittings_by_base:
        for i in range(1, N0 + 1):
            crit1 = min(crit1, critical_hw_aperture(a[i], a.get(i - 1), rng, samples))
    delta1 = _largest_below(grid, crit1)
    if delta1 == 0.0:
        raise DegenerateGeometryError("the hyperplane meets W_i(s) for every grid aperture")
    return delta0, delta1, samples


def cone_opening_radius(s1: float, s2: float, c_P: float, c_Q: float) -> float:
    """Radius rho0 such that rho0-balls around unit C(s1) members stay in C(s2)."""
    return min((s2 - s1) / (2.0 * (c_Q + c_P * s1) * (1.0 + s1)), 1.0 / (2.0 * c_P * (1.0 + s1)))


# -- cone families used by the dichotomy check --


class SplittingConeFamily:
    """Nested cones ``C_i = C(s_i)`` at a fixed base sample (constant cocycles)."""

    def __init__(self, splittings: dict, params: ConeParams):
        self.splittings = splittings
        self.params = params
        self.n0 = params.N0

    def interior_index(self, u) -> tuple[int | None, bool]:
        """Smallest i with ``||Q_i u|| < s_i ||P_i u||``; None when outside C_{N0}."""
        u = np.asarray(u, dtype=float)
        if not np.any(u):
            return None, False
        prev = -math.inf
        for i in range(1, self.n0 + 1):
            _, margin = cone_C_D_W_membership(u, self.splittings, i, self.params.aperture(i), "C")
            if margin > 0:
                # clean: strictly outside the previous cone
                return i, bool(prev < 0)
            prev = margin
        return None, bool(prev < 0)


# -- perturbed cone suite --


@dataclass
class LemmaCheck:
    name: str
    trials: int = 0
    worst_margin: float = math.inf
    counterexamples: list = field(default_factory=list)
    skipped: int = 0

    @property
    def passed(self) -> bool:
        return not self.counterexamples and self.trials > 0

    def record(self, margin: float, info) -> None:
        self.trials += 1
        self.worst_margin = min(self.worst_margin, float(margin))
        if margin < 0:
            self.counterexamples.append(info)

    def to_dict(self) -> dict:
        return {"name": self.name, "trials": self.trials, "passed": self.passed,
                "worst_margin": None if math.isinf(self.worst_margin) else self.worst_margin,
                "counterexamples": self.counterexamples[:10],
                "counterexample_count": len(self.counterexamples), "skipped": self.skipped}


@dataclass
class SuiteReport:
    eps: float
    checks: dict

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def violations(self) -> int:
        return sum(len(c.counterexamples) for c in self.checks.values())

    def to_dict(self) -> dict:
        return {"eps": self.eps, "passed": self.passed,
                "checks": {k: v.to_dict() for k, v in self.checks.items()}}


def _cone_samples(p: np.ndarray, q: np.ndarray, s: float, count: int, rng) -> np.ndarray:
    """Vectors u with ``||Q u|| <= s ||P u||``; a quarter sit on the boundary."""
    n = p.shape[0]
    a = p @ rng.standard_normal((n, count))
    b = q @ rng.standard_normal((n, count))
    na = np.linalg.norm(a, axis=0)
    nb = np.linalg.norm(b, axis=0)
    rho = rng.random(count)
    rho[: count // 4] = 1.0
    scale = np.where(nb > 0, rho * s * na / np.where(nb > 0, nb, 1.0), 0.0)
    return a + b * scale


def _ratio_margin(p, q, u, s):
    """``(s ||P u|| - ||Q u||) / ||u||`` per column."""
    return (s * np.linalg.norm(p @ u, axis=0) - np.linalg.norm(q @ u, axis=0)) / np.linalg.norm(u, axis=0)


def perturbed_cone_suite(params: ConeParams, base_cocycle, perturbed_cocycle, rng: np.random.Generator,
                         samples: int = 200, warmup: int | None = None, eps: float | None = None,
                         unit_times: int = 3) -> SuiteReport:
    """Check the perturbed-cone lemmas on samples along one base orbit.

    Times are integers in ``[T1, 2 T0]`` so each operator is a product of
    unit pieces.  Projections at ``z . t`` come from frame paths of the
    unperturbed cocycle; the stable bundle of the perturbed cocycle (for the
    decay lemma) comes from its own frame path.  Norm growth is tracked in
    log space with per-step renormalisation.
    """
    n = base_cocycle.n
    N0 = params.N0
    delta = params.delta
    k_lo = int(math.ceil(params.T1))
    k_hi = int(math.floor(2 * params.T0))
    warmup = warmup or max(40, int(math.ceil(40.0 / max(params.gamma, 1e-3))))
    path = frame_path(base_cocycle, 0, k_hi, warmup, rng)
    checks = {name: LemmaCheck(name) for name in ("nesting", "invariance", "interior", "contraction",
                                                   "decay", "inclusion")}
    proper = [i for i in range(1, N0 + 1) if i < n]

    # (a) nesting C_i subset int(C_{i+1}) at the anchor
    for i in range(1, N0):
        p, q = path.projector(0, i), np.eye(n) - path.projector(0, i)
        p2, q2 = path.projector(0, i + 1), np.eye(n) - path.projector(0, i + 1)
        u = _cone_samples(p, q, params.aperture(i), samples, rng)
        m = _ratio_margin(p2, q2, u, params.aperture(i + 1))
        for j in range(samples):
            checks["nesting"].record(m[j], {"i": i, "u": u[:, j].tolist()})

    # (b) invariance: T~(t) C^i(c) lands in C^i((4r)^{-N0} delta) for t in [T1, 2 T0]
    target = (4.0 * params.r) ** (-N0) * delta
    for i in proper:
        p0 = path.projector(0, i)
        u = _cone_samples(p0, np.eye(n) - p0, params.c, samples, rng)
        u /= np.linalg.norm(u, axis=0)
        for k in range(0, k_hi):
            u = perturbed_cocycle.step(float(k), 1.0) @ u
            u /= np.linalg.norm(u, axis=0)
            t = k + 1
            if t < k_lo:
                continue
            pk = path.projector(t, i)
            qk = np.eye(n) - pk
            m = _ratio_margin(pk, qk, u, target)
            m_int = _ratio_margin(pk, qk, u, params.aperture(i))
            worst = int(np.argmin(m))
            checks["invariance"].record(float(m[worst]), {"i": i, "t": t, "margin": float(m[worst])})
            worst = int(np.argmin(m_int))
            checks["interior"].record(float(m_int[worst]), {"i": i, "t": t, "margin": float(m_int[worst])})
    if not proper:
        checks["invariance"].skipped += 1
        checks["interior"].skipped += 1

    # (c1) contraction off C_{N0} under the unperturbed cocycle on [1/2, 1]
    if N0 < n:
        anchors = np.linspace(0, k_hi, unit_times).round().astype(int)
        for a in anchors:
            p = path.projector(int(a), N0)
            q = np.eye(n) - p
            # u = w + v with w in range Q, v in range P, ||v|| <= delta ||w||
            w = q @ rng.standard_normal((n, samples))
            v = p @ rng.standard_normal((n, samples))
            nv = np.linalg.norm(v, axis=0)
            nw = np.linalg.norm(w, axis=0)
            rho = rng.random(samples)
            rho[: samples // 4] = 1.0
            u = w + v * np.where(nv > 0, rho * delta * nw / np.where(nv > 0, nv, 1.0), 0.0)
            for t in np.linspace(0.5, 1.0, 6):
                mat = base_cocycle.step(float(a), float(t))
                ratio = np.linalg.norm(mat @ u, axis=0) / np.linalg.norm(u, axis=0)
                j = int(np.argmax(ratio))
                checks["contraction"].record((params.lambda0 - 2 * delta) - ratio[j],
                                             {"anchor": int(a), "t": float(t), "ratio": float(ratio[j])})
    else:
        checks["contraction"].skipped += 1

    # (c2) decay lambda0^t0 for vectors kept outside C_{N0} by the perturbed cocycle
    if N0 < n:
        ppath = frame_path(perturbed_cocycle, 0, k_hi, warmup, rng)
        q_start = np.eye(n) - ppath.projector(0, N0)
        u = q_start @ rng.standard_normal((n, samples))
        u /= np.linalg.norm(u, axis=0)
        logn = np.zeros(samples)
        s_n0 = params.aperture(N0)
        t0_lo = int(math.ceil(params.T0))
        start_out = _ratio_margin(path.projector(0, N0), np.eye(n) - path.projector(0, N0), u, s_n0) < 0
        for k in range(0, k_hi):
            u = perturbed_cocycle.step(float(k), 1.0) @ u
            # re-project onto the perturbed stable bundle against roundoff drift
            u = (np.eye(n) - ppath.projector(k + 1, N0)) @ u
            norms = np.linalg.norm(u, axis=0)
            logn += np.log(norms)
            u /= norms
            t = k + 1
            if t < t0_lo:
                continue
            pk = path.projector(t, N0)
            out_now = _ratio_margin(pk, np.eye(n) - pk, u, s_n0) < 0
            valid = start_out & out_now
            checks["decay"].skipped += int(np.count_nonzero(~valid))
            if valid.any():
                m = t * math.log(params.lambda0) - logn[valid]
                j = int(np.argmin(m))
                checks["decay"].record(float(m[j]), {"t0": t, "log_ratio": float(logn[valid][j])})
    else:
        checks["decay"].skipped += 1

    # (d) inclusion I^i_s subset W^i(2s/(1-s)) with s = delta
    s = delta
    for i in range(1, N0 + 1):
        p, q = path.projector(0, i), np.eye(n) - path.projector(0, i)
        if i > 1:
            p0 = path.projector(0, i - 1)
        else:
            p0 = np.zeros((n, n))
        q0 = np.eye(n) - p0
        # u = w1 + w2 + v: w1 in range Q^i, w2 in range P^i Q^{i-1}, v in range P^{i-1}
        w2 = q0 @ p @ rng.standard_normal((n, samples))
        w1 = q @ rng.standard_normal((n, samples))
        v = p0 @ rng.standard_normal((n, samples))
        for arr in (w1, v):
            na = np.linalg.norm(arr, axis=0)
            arr *= np.where(na > 0, s * rng.random(samples) * np.linalg.norm(w2, axis=0) / 2 / np.where(na > 0, na, 1.0), 0.0)
        u = w1 + w2 + v
        in_i = (np.linalg.norm(p0 @ u, axis=0) <= s * np.linalg.norm(q0 @ u, axis=0)) & \
               (np.linalg.norm(q @ u, axis=0) <= s * np.linalg.norm(p @ u, axis=0))
        big = 2 * s / (1 - s)
        lhs = np.linalg.norm(q @ u + p0 @ u, axis=0)
        rhs = big * np.linalg.norm(q0 @ (p @ u), axis=0)
        m = (rhs - lhs) / np.linalg.norm(u, axis=0)
        checks["inclusion"].skipped += int(np.count_nonzero(~in_i))
        for j in np.flatnonzero(in_i):
            checks["inclusion"].record(float(m[j]), {"i": i, "u": u[:, j].tolist()})
    eps = getattr(perturbed_cocycle, "eps", 0.0) if eps is None else eps
    return SuiteReport(float(eps), checks)


def search_eps1(params: ConeParams, base_cocycle, make_perturbed, seeds, grid, rng_seed: int = 0,
                samples: int = 100) -> tuple[float, list]:
    """Largest grid value ``eps`` whose suite passes for every seed.

    ``grid`` is scanned upward and the scan stops at the first failure, so
    every value below the returned one passed too.  Returns ``(eps1, rows)``
    where rows record per-eps pass counts.
    """
    rows = []
    eps1 = 0.0
    for eps in sorted(grid):
        ok = True
        for seed in seeds:
            rep = perturbed_cone_suite(params, base_cocycle, make_perturbed(eps, seed),
                                       np.random.default_rng(rng_seed), samples=samples)
            if not rep.passed:
                ok = False
                break
        rows.append({"eps": float(eps), "passed": ok})
        if not ok:
            break
        eps1 = float(eps)
    return eps1, rows


def transport_check(params: ConeParams, cocycle, rng: np.random.Generator, count: int = 1000,
                    times=None, warmup: int | None = None) -> LemmaCheck:
    """``||Q u|| <= c ||P u||`` at z implies ``||Q T(t)u|| <= (8r)^{-N0} delta ||P T(t)u||`` for t >= T1."""
    n = cocycle.n
    check = LemmaCheck("transport")
    k_lo = int(math.ceil(params.T1))
    k_hi = max(k_lo, int(math.floor(2 * params.T0)))
    times = set(range(k_lo, k_hi + 1)) if times is None else set(int(t) for t in times)
    warmup = warmup or max(40, int(math.ceil(40.0 / max(params.gamma, 1e-3))))
    path = frame_path(cocycle, 0, k_hi, warmup, rng)
    target = (8.0 * params.r) ** (-params.N0) * params.delta
    for i in [i for i in range(1, params.N0 + 1) if i < n]:
        p0 = path.projector(0, i)
        u = _cone_samples(p0, np.eye(n) - p0, params.c, count, rng)
        u /= np.linalg.norm(u, axis=0)
        for k in range(k_hi):
            u = cocycle.step(float(k), 1.0) @ u
            u /= np.linalg.norm(u, axis=0)
            if k + 1 in times:
                pk = path.projector(k + 1, i)
                m = _ratio_margin(pk, np.eye(n) - pk, u, target)
                j = int(np.argmin(m))
                check.record(float(m[j]), {"i": i, "t": k + 1, "margin": float(m[j])})
    return check


__all__ = [
    "ConeParams", "FramePath", "LemmaCheck", "Splitting", "SplittingConeFamily", "SuiteReport",
    "bisect_increasing", "compute_constants", "compute_splitting", "compute_splittings",
    "cone_C_D_W_membership", "cone_opening_radius", "critical_cd_aperture", "critical_hw_aperture", "default_lambda1", "find_N0", "find_delta0_delta1",
    "frame_path", "lambda0_formula", "perturbed_cone_suite", "projector", "search_eps1", "solve_T0",
    "solve_T1", "spectral_norm", "sup_norm_window", "transport_check",
]
