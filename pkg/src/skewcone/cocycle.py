"""The linear cocycle ``T(t, z)`` of orbit differences and its axiom battery.

For ``z = (x, y, theta)`` the operator ``T(t, z)`` solves ``v' = a(t) v`` with
``a(t) = int_0^1 J(theta . t, s phi(t,x) + (1-s) phi(t,y)) ds``.  The two
nonlinear orbits and the linear system are integrated as one augmented state,
so ``T(t,z)(x-y)`` and ``phi(t,x) - phi(t,y)`` see identical stage values and
agree to roundoff whenever the quadrature is exact.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .cones import BOUNDARY, INTERIOR, cone_membership_vec, hyperplane_split, sigma
from .errors import ConfigurationError
from .forcing import TorusPoint, base_angles
from .ode import solve
from .tridiag import TridiagSpec, gauged

QUAD_NODES = 16


def gauss_legendre_unit(nodes: int = QUAD_NODES) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, 1]."""
    if nodes < 1:
        raise ConfigurationError("quadrature needs at least one node")
    x, w = np.polynomial.legendre.leggauss(nodes)
    return 0.5 * (x + 1.0), 0.5 * w


@dataclass
class CocyclePoint:
    """Two states over a common base point; batch axes trail the state axis."""

    x: np.ndarray
    y: np.ndarray
    theta: object

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.x.shape != self.y.shape:
            raise ConfigurationError("x and y have different shapes")

    @property
    def angles(self) -> np.ndarray:
        return base_angles(self.theta)


@dataclass
class FundamentalMatrix:
    t_grid: np.ndarray
    matrices: np.ndarray


def _meanvalue(spec: TridiagSpec, angles, x, y, nodes: int) -> np.ndarray:
    s, w = gauss_legendre_unit(nodes)
    shape = (1, nodes) + (1,) * (x.ndim - 1)
    seg = s.reshape(shape) * x[:, None] + (1.0 - s.reshape(shape)) * y[:, None]
    ang = np.asarray(angles)
    if ang.ndim > 1:
        # node axis sits right after the state axis
        ang = ang[:, None]
    jac = spec.full_jacobian(ang, seg)
    return np.einsum("ijk...,k->ij...", jac, w)


def meanvalue_coefficients(spec: TridiagSpec, z: CocyclePoint, t: float, tol: float = 1e-10,
                           nodes: int = QUAD_NODES) -> np.ndarray:
    """``a(t)`` along the orbits through ``z``; shape (n, n) + batch."""
    if t < 0:
        raise ValueError("orbits are only available for t >= 0")
    xt, yt = _flow_pair(spec, z, t, tol)
    angles = _angles_after(spec, z.angles, t)
    return _meanvalue(spec, angles, xt, yt, nodes)


def _angles_after(spec, angles, t):
    om = spec.rotation.as_array().reshape((-1,) + (1,) * (np.ndim(angles) - 1))
    return angles + om * t


def _flow_pair(spec, z, t, tol):
    if t == 0:
        return z.x, z.y
    fun = spec.rhs(z.angles)
    stacked = np.stack([z.x, z.y], axis=1)
    sol = solve(fun, (0.0, t), stacked, tol=tol)
    return sol.y_eval[-1][:, 0], sol.y_eval[-1][:, 1]


def _augmented_rhs(spec: TridiagSpec, angles, nodes: int):
    base = np.asarray(angles, dtype=float)
    om = spec.rotation.as_array().reshape((-1,) + (1,) * (base.ndim - 1))

    def fun(t, state):
        ang = base + om * t
        x, y, v = state[:, 0], state[:, 1], state[:, 2:]
        a = _meanvalue(spec, ang, x, y, nodes)
        dv = np.einsum("ij...,jk...->ik...", a, v)
        out = np.empty_like(state)
        out[:, 0] = spec.vector_field(ang, x)
        out[:, 1] = spec.vector_field(ang, y)
        out[:, 2:] = dv
        return out

    return fun


@dataclass
class Propagation:
    """``values[k] = T(t_k, z) v``; ``x``/``y`` hold the orbits on the same grid."""

    t_grid: np.ndarray
    values: np.ndarray
    x: np.ndarray
    y: np.ndarray

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]


def _shift_theta(theta, t, rotation):
    ang = base_angles(theta)
    om = rotation.as_array().reshape((-1,) + (1,) * (ang.ndim - 1))
    out = ang + om * t
    return TorusPoint(tuple(out)) if isinstance(theta, TorusPoint) else np.mod(out, 2 * math.pi)


def propagate(spec: TridiagSpec, z: CocyclePoint, v, t, tol: float = 1e-8,
              nodes: int = QUAD_NODES, t_eval=None) -> Propagation:
    """Integrate ``v' = a(t) v`` alongside both orbits up to time ``t``.

    ``v`` has shape (n,) + batch (one vector per point) or (n, k) + batch
    (a frame).  The result also carries both nonlinear orbits so the next
    leg of a composition can start from ``z . t``.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    v = np.asarray(v, dtype=float)
    frame = v.ndim == z.x.ndim + 1
    vv = v if frame else v[:, None]
    state = np.concatenate([z.x[:, None], z.y[:, None], vv], axis=1)
    if t_eval is None:
        t_eval = np.array([0.0, float(t)])
    t_eval = np.asarray(t_eval, dtype=float)
    if t == 0:
        ys = np.repeat(state[None], len(t_eval), axis=0)
    else:
        sol = solve(_augmented_rhs(spec, z.angles, nodes), (0.0, float(t)), state, tol=tol, t_eval=t_eval)
        ys = sol.y_eval
    vals = ys[:, :, 2:] if frame else ys[:, :, 2]
    return Propagation(t_eval, vals, ys[:, :, 0], ys[:, :, 1])


def advance_point(spec: TridiagSpec, z: CocyclePoint, t: float, tol: float = 1e-8) -> CocyclePoint:
    """``z . t``: both states flowed and the base shifted."""
    xt, yt = _flow_pair(spec, z, t, tol)
    return CocyclePoint(xt, yt, _shift_theta(z.theta, t, spec.rotation))


def fundamental_matrix(spec: TridiagSpec, z: CocyclePoint, t_grid, tol: float = 1e-8,
                       nodes: int = QUAD_NODES) -> FundamentalMatrix:
    """``Phi(t)`` on ``t_grid`` (starting at 0) for an unbatched point."""
    t_grid = np.asarray(t_grid, dtype=float)
    if z.x.ndim != 1:
        raise ConfigurationError("fundamental_matrix takes an unbatched point")
    n = len(z.x)
    prop = propagate(spec, z, np.eye(n), float(t_grid[-1]), tol, nodes, t_eval=t_grid)
    return FundamentalMatrix(t_grid, prop.values)


def variational_crosscheck(spec: TridiagSpec, z: CocyclePoint, t: float, tol: float = 1e-8,
                           nodes: int = 32) -> np.ndarray:
    """``int_0^1 d_x phi(t, y + s(x-y)) ds`` via variational equations.

    An independent, lower-accuracy path for an unbatched point.  It differs
    from the mean-value ``T(t, z)`` as a matrix; the two agree on ``x - y``,
    where both return ``phi(t, x) - phi(t, y)``.
    """
    s, w = gauss_legendre_unit(nodes)
    n = len(z.x)
    starts = z.y[:, None] + s[None] * (z.x - z.y)[:, None]
    base = z.angles[:, None] if np.ndim(z.angles) == 1 else z.angles
    om = spec.rotation.as_array()[:, None]

    def fun(tt, state):
        ang = base + om * tt
        pts = state[:, 0]
        phi = state[:, 1:]
        jac = spec.full_jacobian(ang, pts)
        out = np.empty_like(state)
        out[:, 0] = spec.vector_field(ang, pts)
        out[:, 1:] = np.einsum("ijk,jlk->ilk", jac, phi)
        return out

    state = np.concatenate([starts[:, None], np.repeat(np.eye(n)[:, :, None], nodes, axis=2)], axis=1)
    sol = solve(fun, (0.0, t), state, tol=tol)
    return np.tensordot(sol.y_eval[-1][:, 1:], w, axes=([2], [0]))


# -- cocycles anchored at a base sample, viewed as sequences of step matrices --


class ConstantCocycle:
    """``T(t) = exp(A t)`` independent of the base point."""

    def __init__(self, matrix):
        self.matrix = np.asarray(matrix, dtype=float)
        self.n = self.matrix.shape[0]

    def step(self, t0: float, dt: float) -> np.ndarray:
        return expm(self.matrix * dt)


class TridiagCocycle:
    """``T(dt, z . t0)`` along the forward orbit of an unbatched point ``z``."""

    def __init__(self, spec: TridiagSpec, z: CocyclePoint, tol: float = 1e-9):
        self.spec = spec
        self.z = z
        self.tol = tol
        self.n = spec.n
        self._points = {0.0: z}

    def point(self, t0: float) -> CocyclePoint:
        if t0 in self._points:
            return self._points[t0]
        earlier = max(k for k in self._points if k <= t0)
        p = advance_point(self.spec, self._points[earlier], t0 - earlier, self.tol)
        self._points[t0] = p
        return p

    def step(self, t0: float, dt: float) -> np.ndarray:
        p = self.point(float(t0))
        return propagate(self.spec, p, np.eye(self.n), dt, self.tol).final


class PerturbedCocycle:
    """``T(dt) + eps R(t0, dt)`` with a smooth, seeded ``R`` of spectral norm <= 1."""

    def __init__(self, base, eps: float, seed: int):
        self.base = base
        self.eps = float(eps)
        self.n = base.n
        rng = np.random.default_rng(seed)
        b1 = rng.standard_normal((self.n, self.n))
        b2 = rng.standard_normal((self.n, self.n))
        self._b1 = b1 / np.linalg.norm(b1, 2)
        self._b2 = b2 / np.linalg.norm(b2, 2)
        self._phase = rng.uniform(0, 2 * math.pi, size=2)

    def perturbation(self, t0: float, dt: float) -> np.ndarray:
        tau = t0 + dt
        c1 = math.cos(tau + self._phase[0])
        c2 = math.sin(math.sqrt(3.0) * tau + self._phase[1])
        # |c1| + |c2| <= 2, so halving keeps the norm at most 1
        return 0.5 * (c1 * self._b1 + c2 * self._b2)

    def step(self, t0: float, dt: float) -> np.ndarray:
        return self.base.step(t0, dt) + self.eps * self.perturbation(t0, dt)


def evolve(cocycle, t0: float, t: float) -> np.ndarray:
    """Compose ``ceil(t)`` equal pieces (each in [1/2, 1] when t >= 1/2)."""
    if t <= 0:
        return np.eye(cocycle.n)
    m = max(1, math.ceil(t - 1e-12))
    dt = t / m
    out = np.eye(cocycle.n)
    for k in range(m):
        out = cocycle.step(t0 + k * dt, dt) @ out
    return out


# -- axiom battery --


@dataclass
class SamplePlan:
    samples: int = 20
    t_min: float = 0.5
    horizon: float = 2.0
    times: int = 4
    box: float = 2.0
    tol: float = 1e-9
    h1_tol: float = 1e-8
    cone_tol: float = 1e-9


@dataclass
class AxiomResult:
    axiom: str
    status: str
    trials: int = 0
    worst_margin: float = math.nan
    counterexamples: list = field(default_factory=list)
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "axiom": self.axiom,
            "status": self.status,
            "trials": self.trials,
            "worst_margin": None if math.isnan(self.worst_margin) else float(self.worst_margin),
            "counterexamples": self.counterexamples[:10],
            "counterexample_count": len(self.counterexamples),
            "note": self.note,
        }


@dataclass
class BatteryReport:
    system: str
    results: dict

    def passed(self, axiom: str) -> bool:
        return self.results[axiom].status in ("pass", "structural")

    def to_dict(self) -> dict:
        return {"system": self.system, "axioms": {k: r.to_dict() for k, r in self.results.items()}}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _sample_points(spec, plan, rng, count):
    x = rng.uniform(-plan.box, plan.box, size=(spec.n, count))
    y = rng.uniform(-plan.box, plan.box, size=(spec.n, count))
    theta = rng.uniform(0, 2 * math.pi, size=(spec.rotation.m, count))
    return CocyclePoint(x, y, theta)


def _boundary_samples(n: int, rng, count: int) -> list[tuple[np.ndarray, int]]:
    """Vectors on or near cone boundaries, each paired with its cone index."""
    out = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        out.append((e, sigma(e).sigma_min + 1))
    while len(out) < count:
        v = rng.standard_normal(n)
        zeros = rng.random(n) < 0.4
        v[zeros] = 0.0
        if not np.any(v):
            continue
        i = sigma(v).sigma_min + 1
        if i <= n - 1:
            out.append((v, i))
    return out


def _fmt(v) -> list:
    return [float(a) for a in np.ravel(v)]


def axiom_battery(spec: TridiagSpec, plan: SamplePlan, rng: np.random.Generator) -> BatteryReport:
    """Run (H1)-(H5) on random samples of ``z`` and test vectors.

    Cones live in gauge coordinates, so the battery runs on ``gauged(spec)``.
    Failures are recorded as counterexamples, never raised.
    """
    g = gauged(spec)
    n = g.n
    count = plan.samples
    z = _sample_points(g, plan, rng, count)
    results = {}
    ct = plan.cone_tol

    # (H1): composition, continuity at t=0 and the difference identity
    t1 = rng.uniform(0.25, 2.0)
    t2 = rng.uniform(0.25, 2.0)
    v = rng.standard_normal((n, count))
    full = propagate(g, z, v, t1 + t2, plan.tol)
    first = propagate(g, z, v, t1, plan.tol)
    mid = CocyclePoint(first.x[-1], first.y[-1], _shift_theta(z.theta, t1, g.rotation))
    second = propagate(g, mid, first.final, t2, plan.tol)
    comp = np.max(np.abs(full.final - second.final), axis=0) / np.maximum(1.0, np.max(np.abs(full.final), axis=0))
    h = 1e-6
    cont = np.max(np.abs(propagate(g, z, v, h, plan.tol).final - v), axis=0) / np.max(np.abs(v), axis=0)
    diff = propagate(g, z, z.x - z.y, 1.0, plan.tol)
    ident = np.max(np.abs(diff.final - (diff.x[-1] - diff.y[-1])), axis=0)
    bad = [{"kind": "composition", "sample": int(k), "residual": float(comp[k])}
           for k in np.flatnonzero(comp > plan.h1_tol)]
    bad += [{"kind": "continuity", "sample": int(k), "residual": float(cont[k])}
            for k in np.flatnonzero(cont > 1e-3)]
    bad += [{"kind": "difference", "sample": int(k), "residual": float(ident[k])}
            for k in np.flatnonzero(ident > 10 * plan.h1_tol)]
    # relative to each threshold so the three residuals share one scale
    margin = min(1.0 - comp.max() / plan.h1_tol, 1.0 - cont.max() / 1e-3, 1.0 - ident.max() / (10 * plan.h1_tol))
    results["H1"] = AxiomResult("H1", "fail" if bad else "pass", 3 * count, margin, bad,
                                f"t1={t1:.6f}, t2={t2:.6f}, h={h:g}")

    results["H2"] = AxiomResult("H2", "structural", 0, math.nan, [],
                                "finite dimension: every linear operator is compact")

    times = np.linspace(plan.t_min, plan.horizon, plan.times)
    t_eval = np.concatenate([[0.0], times])

    # (H3): nonzero vectors become regular, i.e. interior to C_{sigma+1}
    w = rng.standard_normal((n, count))
    w[rng.random((n, count)) < 0.3] = 0.0
    w[0, np.all(w == 0, axis=0)] = 1.0
    prop = propagate(g, z, w, plan.horizon, plan.tol, t_eval=t_eval)
    bad, worst, trials = [], math.inf, 0
    for k in range(1, len(t_eval)):
        for b in range(count):
            out = prop.values[k][:, b]
            res = sigma(out, ct)
            trials += 1
            worst = min(worst, res.margin if res.regular else -1.0)
            if not res.regular or not np.any(out):
                bad.append({"t": float(t_eval[k]), "v": _fmt(w[:, b]), "Tv": _fmt(out)})
    results["H3"] = AxiomResult("H3", "fail" if bad else "pass", trials, worst, bad)

    # (H4): boundary-near vectors of C_i are mapped into int(C_i)
    samples = _boundary_samples(n, rng, max(count, n))
    vecs = np.stack([s for s, _ in samples], axis=1)
    idx = [i for _, i in samples]
    zb = _sample_points(g, plan, rng, vecs.shape[1])
    prop = propagate(g, zb, vecs, plan.horizon, plan.tol, t_eval=t_eval)
    bad, worst, trials = [], math.inf, 0
    for k in range(1, len(t_eval)):
        for b, i in enumerate(idx):
            out = prop.values[k][:, b]
            mem = cone_membership_vec(out, i, ct)
            trials += 1
            worst = min(worst, mem.margin if mem.location == INTERIOR else -1.0)
            if mem.location != INTERIOR:
                bad.append({"t": float(t_eval[k]), "i": i, "v": _fmt(vecs[:, b]), "Tv": _fmt(out),
                            "location": mem.location})
    results["H4"] = AxiomResult("H4", "fail" if bad else "pass", trials, worst, bad)

    # (H5): w in (C_i \ C_{i-1}) cap H with w = T(t) v forces v outside C_i
    bad, worst, trials = [], math.inf, 0
    t_h5 = rng.uniform(plan.t_min, 1.0, size=count)
    for b in range(count):
        zp = CocyclePoint(zb.x[:, b % zb.x.shape[1]], zb.y[:, b % zb.x.shape[1]],
                          zb.theta[:, b % zb.x.shape[1]])
        phi = propagate(g, zp, np.eye(n), float(t_h5[b]), plan.tol).final
        for _ in range(3):
            wv = rng.standard_normal(n)
            wv[0] = 0.0
            wv[1:][rng.random(n - 1) < 0.2] = 0.0
            if not np.any(wv):
                continue
            if hyperplane_split(wv).side != "H":
                continue
            i = sigma(wv, ct).sigma_min + 1
            vv = np.linalg.solve(phi, wv)
            mem = cone_membership_vec(vv, i, ct)
            trials += 1
            worst = min(worst, mem.margin if mem.location == "outside" else -1.0)
            if mem.location != "outside":
                bad.append({"t": float(t_h5[b]), "i": i, "w": _fmt(wv), "v": _fmt(vv),
                            "location": mem.location})
    results["H5"] = AxiomResult("H5", "fail" if bad else "pass", trials, worst, bad)
    return BatteryReport(spec.name, results)


def difference_identity_check(spec: TridiagSpec, rng: np.random.Generator, samples: int = 100,
                              times=(0.5, 1.0, 2.0, 5.0), tol: float = 1e-8, box: float = 2.0) -> dict:
    """Residuals of ``T(t, z)(x - y) = phi(t, x) - phi(t, y)`` and of the cocycle property.

    The composition residual compares ``T(2, z) v`` with
    ``T(1, z.1) T(1, z) v`` relative to ``max(1, |T v|)``.
    """
    times = np.asarray(sorted(times), dtype=float)
    plan = SamplePlan(samples=samples, box=box, tol=tol)
    z = _sample_points(spec, plan, rng, samples)
    t_eval = np.concatenate([[0.0], times])
    prop = propagate(spec, z, z.x - z.y, float(times[-1]), tol, t_eval=t_eval)
    per_time = [float(np.max(np.abs(prop.values[k] - (prop.x[k] - prop.y[k])))) for k in range(1, len(t_eval))]
    v = rng.standard_normal((spec.n, samples))
    full = propagate(spec, z, v, 2.0, tol)
    first = propagate(spec, z, v, 1.0, tol)
    mid = CocyclePoint(first.x[-1], first.y[-1], _shift_theta(z.theta, 1.0, spec.rotation))
    second = propagate(spec, mid, first.final, 1.0, tol)
    comp = np.max(np.abs(full.final - second.final), axis=0) / np.maximum(1.0, np.max(np.abs(full.final), axis=0))
    return {"times": times.tolist(), "identity_residual": per_time, "max_identity_residual": max(per_time),
            "composition_residual": float(comp.max()), "samples": samples, "tol": tol}


def sigma_monotonicity(spec: TridiagSpec, rng: np.random.Generator, samples: int = 100, horizon: float = 20.0,
                       dt: float = 0.05, tol: float = 1e-8, box: float = 2.0, cone_tol: float = 1e-9) -> dict:
    """Count increases of ``sigma`` between regular instants along orbit differences.

    Differences are propagated by the cocycle (gauge coordinates) so decay
    does not destroy their sign pattern.
    """
    g = gauged(spec)
    plan = SamplePlan(samples=samples, box=box, tol=tol)
    z = _sample_points(g, plan, rng, samples)
    t_eval = np.linspace(0.0, horizon, int(round(horizon / dt)) + 1)
    prop = propagate(g, z, z.x - z.y, horizon, tol, t_eval=t_eval)
    violations, regular, total = [], 0, 0
    for b in range(samples):
        last = None
        for k, t in enumerate(t_eval):
            res = sigma(prop.values[k][:, b], cone_tol)
            total += 1
            if not res.regular:
                continue
            regular += 1
            if last is not None and res.sigma > last[1]:
                violations.append({"sample": b, "t": float(t), "from": last[1], "to": res.sigma})
            last = (t, res.sigma)
    return {"samples": samples, "instants": total, "regular_instants": regular,
            "violations": violations, "violation_count": len(violations)}


__all__ = [
    "AxiomResult", "BatteryReport", "ConstantCocycle", "CocyclePoint", "FundamentalMatrix",
    "PerturbedCocycle", "Propagation", "SamplePlan", "TridiagCocycle", "advance_point",
    "axiom_battery", "difference_identity_check", "evolve", "fundamental_matrix", "gauss_legendre_unit",
    "meanvalue_coefficients", "propagate", "sigma_monotonicity", "variational_crosscheck",
]
