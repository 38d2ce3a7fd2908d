"""Competitive-cooperative tridiagonal systems driven by a torus flow.

A system is ``x' = f(theta . t, x) + eps g(theta . t, x)`` where ``f_i``
depends on ``x_{i-1}, x_i, x_{i+1}`` only.  Vector fields take the torus
angles and a state array whose first axis is the component index; any
trailing axes are batch axes and are carried through untouched.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import PreconditionError
from .forcing import ForcingSpec, RotationVector, TorusPoint, angles_at, base_angles, eval_forcing
from .ode import IntegrationError, solve

Field = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class TridiagSpec:
    """A forced tridiagonal system with an optional global perturbation.

    ``field(angles, x)`` is the tridiagonal part, ``jacobian(angles, x)``
    returns its Jacobian with shape ``(n, n) + batch``.  ``perturbation`` is
    the bounded term ``g`` (sup norm ``g_bound``) scaled by ``eps``.
    ``dissipation = (delta, C)`` declares the constants of the box condition;
    ``weak_dissipation`` records the weaker sign condition without checking it.
    """

    n: int
    rotation: RotationVector
    field: Field
    jacobian: Field
    delta_signs: tuple[int, ...] = ()
    eps0: float = 0.0
    perturbation: Field | None = None
    perturbation_jacobian: Field | None = None
    eps: float = 0.0
    g_bound: float = 0.0
    dissipation: tuple[float, float] | None = None
    weak_dissipation: tuple[float, float] | None = None
    box: float = 5.0
    name: str = "tridiag"
    approximate_jacobian: bool = False

    def __post_init__(self):
        signs = tuple(int(s) for s in self.delta_signs)
        if len(signs) != max(self.n - 1, 0) and signs:
            raise ValueError(f"delta_signs must have length n-1 = {self.n - 1}")
        if any(s not in (-1, 1) for s in signs):
            raise ValueError("delta_signs entries must be +1 or -1")
        object.__setattr__(self, "delta_signs", signs or (1,) * max(self.n - 1, 0))

    def angles(self, theta: TorusPoint, t) -> np.ndarray:
        return angles_at(theta, self.rotation, t)

    def vector_field(self, angles: np.ndarray, x: np.ndarray) -> np.ndarray:
        out = self.field(angles, x)
        if self.eps != 0.0 and self.perturbation is not None:
            out = out + self.eps * self.perturbation(angles, x)
        return out

    def full_jacobian(self, angles: np.ndarray, x: np.ndarray) -> np.ndarray:
        jac = self.jacobian(angles, x)
        if self.eps != 0.0 and self.perturbation_jacobian is not None:
            jac = jac + self.eps * self.perturbation_jacobian(angles, x)
        return jac

    def rhs(self, theta):
        """``fun(t, x)`` for the solver; ``theta`` may be a TorusPoint or a
        raw angle array of shape (m,) or (m, batch) matching the batch axes of x."""
        base = base_angles(theta)
        omega = self.rotation.as_array().reshape((-1,) + (1,) * (base.ndim - 1))

        def fun(t, x):
            return self.vector_field(base + omega * t, x)

        return fun


def finite_difference_jacobian(fld: Field, n: int, step: float = 1e-7) -> Field:
    """Central-difference Jacobian; flag the spec with ``approximate_jacobian``."""

    def jac(angles, x):
        x = np.asarray(x, dtype=float)
        out = np.empty((n, n) + x.shape[1:])
        for j in range(n):
            dx = np.zeros_like(x)
            dx[j] = step
            out[:, j] = (fld(angles, x + dx) - fld(angles, x - dx)) / (2 * step)
        return out

    return jac


@dataclass
class Orbit:
    """States of one trajectory (or a batch) on a time grid."""

    t_grid: np.ndarray
    states: np.ndarray
    theta0: TorusPoint
    rotation: RotationVector

    def __post_init__(self):
        self.t_grid = np.asarray(self.t_grid, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if len(self.t_grid) != len(self.states):
            raise ValueError("t_grid and states differ in length")
        if np.any(np.diff(self.t_grid) <= 0):
            raise ValueError("t_grid must be strictly increasing")

    def angles(self) -> np.ndarray:
        """Wrapped base angles along the grid, shape (len, m)."""
        a = angles_at(self.theta0, self.rotation, self.t_grid).T
        return np.mod(a, 2 * math.pi)

    def to_csv(self, path) -> Path:
        """Columns: t, x_1..x_n, angle_1..angle_m (unbatched orbits only)."""
        if self.states.ndim != 2:
            raise ValueError("CSV export needs an unbatched orbit")
        path = Path(path)
        n = self.states.shape[1]
        m = self.rotation.m
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t"] + [f"x_{i + 1}" for i in range(n)] + [f"angle_{j + 1}" for j in range(m)])
            for t, x, a in zip(self.t_grid, self.states, self.angles()):
                writer.writerow([repr(float(t))] + [repr(float(v)) for v in x] + [repr(float(v)) for v in a])
        return path


def gauge_transform(delta_signs) -> np.ndarray:
    """Signs ``mu`` with ``mu_1 = 1`` and ``mu_i = delta_{i-1} mu_{i-1}``."""
    mu = [1]
    for d in delta_signs:
        if d not in (-1, 1):
            raise ValueError("delta_signs entries must be +1 or -1")
        mu.append(int(d) * mu[-1])
    return np.array(mu, dtype=int)


def gauged(spec: TridiagSpec) -> TridiagSpec:
    """The same system in coordinates ``x_hat = mu x``; cooperative afterwards."""
    mu = gauge_transform(spec.delta_signs).astype(float)
    if np.all(mu == 1):
        return spec

    def _mu(x):
        return mu.reshape((-1,) + (1,) * (np.ndim(x) - 1))

    def fld(angles, x):
        return _mu(x) * spec.field(angles, _mu(x) * x)

    def jac(angles, x):
        j = spec.jacobian(angles, _mu(x) * x)
        s = np.outer(mu, mu).reshape((spec.n, spec.n) + (1,) * (np.ndim(x) - 1))
        return s * j

    pert = pert_jac = None
    if spec.perturbation is not None:
        def pert(angles, x):
            return _mu(x) * spec.perturbation(angles, _mu(x) * x)
    if spec.perturbation_jacobian is not None:
        def pert_jac(angles, x):
            s = np.outer(mu, mu).reshape((spec.n, spec.n) + (1,) * (np.ndim(x) - 1))
            return s * spec.perturbation_jacobian(angles, _mu(x) * x)

    return replace(spec, field=fld, jacobian=jac, perturbation=pert, perturbation_jacobian=pert_jac,
                   delta_signs=(1,) * (spec.n - 1), name=spec.name + "-gauged")


def cooperativity_margin(spec: TridiagSpec, rng: np.random.Generator, samples: int = 1000) -> float:
    """Smallest off-diagonal Jacobian entry over random (theta, x) in the box.

    Sampled on the gauged system, so the result should be at least ``eps0``.
    """
    g = gauged(spec)
    if g.n < 2:
        return math.inf
    x = rng.uniform(-g.box, g.box, size=(g.n, samples))
    angles = rng.uniform(0, 2 * math.pi, size=(g.rotation.m, samples))
    jac = g.jacobian(angles, x)
    idx = np.arange(g.n - 1)
    return float(min(jac[idx, idx + 1].min(), jac[idx + 1, idx].min()))


def integrate(spec: TridiagSpec, theta: TorusPoint, x0, t_span, tol: float = 1e-8,
              t_eval=None, dense: bool = False) -> Orbit:
    """Orbit of the (perturbed) system from ``x0`` over the base orbit of ``theta``.

    ``x0`` may carry trailing batch axes.  With ``t_eval`` omitted the orbit
    holds just the two endpoints.  ``dense=True`` attaches the Hermite
    interpolant as ``orbit.dense``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    x0 = np.asarray(x0, dtype=float)
    if x0.shape[0] != spec.n:
        raise ValueError(f"initial state has {x0.shape[0]} components, system has {spec.n}")
    t_span = (float(t_span[0]), float(t_span[1]))
    if t_eval is None:
        t_eval = np.array(t_span)
    sol = solve(spec.rhs(theta), t_span, x0, tol=tol, t_eval=t_eval, dense=dense)
    orbit = Orbit(sol.t_eval, sol.y_eval, theta, spec.rotation)
    if dense:
        orbit.dense = sol
    return orbit


@dataclass
class DissipativeReport:
    entered: bool
    max_entry_time: float
    violations: list = field(default_factory=list)
    samples: int = 0


def check_dissipative_box(spec: TridiagSpec, sample_count: int, rng: np.random.Generator,
                          start_radius: float = 5.0, horizon: float = 20.0, dt: float = 0.05,
                          tol: float = 1e-8, slack: float = 1e-9) -> DissipativeReport:
    """Check that random orbits enter ``{|x_i| <= C}`` and stay there.

    Starts are uniform in ``[-start_radius, start_radius]^n`` with random base
    points; violations are recorded in the report, never raised.
    """
    if spec.dissipation is None:
        raise PreconditionError("spec does not declare dissipation constants (delta, C)")
    delta, c_box = spec.dissipation
    if spec.eps != 0.0 and abs(spec.eps) * spec.g_bound >= delta:
        raise PreconditionError(
            f"|eps| * M_g = {abs(spec.eps) * spec.g_bound:.4g} must be below delta = {delta:.4g}"
        )
    x0 = rng.uniform(-start_radius, start_radius, size=(spec.n, sample_count))
    thetas = rng.uniform(0, 2 * math.pi, size=(sample_count, spec.rotation.m))
    t_eval = np.arange(0.0, horizon + dt / 2, dt)
    violations = []
    entry_times = []
    # per-sample base points ride along as an angle array
    states = solve(spec.rhs(thetas.T), (0.0, horizon), x0, tol=tol, t_eval=t_eval).y_eval
    inside = np.all(np.abs(states) <= c_box + slack, axis=1)
    for b in range(sample_count):
        ins = inside[:, b]
        if not ins.any():
            violations.append({"sample": b, "x0": x0[:, b].tolist(), "reason": "never entered"})
            continue
        first = int(np.argmax(ins))
        entry_times.append(float(t_eval[first]))
        if not ins[first:].all():
            exit_idx = first + int(np.argmin(ins[first:]))
            violations.append({"sample": b, "x0": x0[:, b].tolist(), "reason": "left the box",
                               "time": float(t_eval[exit_idx])})
    return DissipativeReport(entered=not violations, max_entry_time=max(entry_times, default=math.inf),
                             violations=violations, samples=sample_count)


def _bcast(v, x):
    return np.asarray(v, dtype=float).reshape((-1,) + (1,) * (np.ndim(x) - 1))


def cubic_chain(n: int, linear: float = 0.0, cubic: float = 1.0, coupling=1.0, delta_signs=None,
                forcing: ForcingSpec | None = None, rotation: RotationVector | None = None,
                eps: float = 0.0, perturbation: str | None = None,
                dissipation: tuple[float, float] | None = None, box: float = 5.0,
                name: str = "cubic-chain") -> TridiagSpec:
    """``x_i' = a x_i - b x_i^3 + sum_links delta k x_neighbour + F_i(theta)``.

    ``coupling`` holds the link strengths (length n-1, positive); the
    sign of link i is ``delta_signs[i]``.  ``perturbation='global'`` adds the
    bounded all-to-all term ``g_i = sin(theta_1 + i) tanh(mean(x))``.
    """
    rotation = rotation or (forcing.rotation if forcing is not None else RotationVector((1.0, math.sqrt(2.0))))
    signs = np.array(delta_signs if delta_signs is not None else [1] * (n - 1), dtype=float)
    k = np.broadcast_to(np.asarray(coupling, dtype=float), (max(n - 1, 0),)).copy()
    if np.any(k < 0):
        raise ValueError("coupling strengths must be nonnegative; use delta_signs for signs")
    off = signs * k
    if forcing is not None and forcing.rotation != rotation:
        raise ValueError("forcing rotation differs from system rotation")

    def fld(angles, x):
        out = linear * x - cubic * x**3
        if n > 1:
            ob = _bcast(off, x)
            out = out.copy()
            out[:-1] += ob * x[1:]
            out[1:] += ob * x[:-1]
        if forcing is not None:
            out = out + eval_forcing(forcing, angles, x)
        return out

    def jac(angles, x):
        out = np.zeros((n, n) + np.shape(x)[1:])
        idx = np.arange(n)
        out[idx, idx] = linear - 3 * cubic * x**2
        if n > 1:
            ob = _bcast(off, x)
            out[idx[:-1], idx[:-1] + 1] = ob
            out[idx[:-1] + 1, idx[:-1]] = ob
        return out

    pert = pert_jac = None
    g_bound = 0.0
    if perturbation == "global":
        phases = np.arange(n, dtype=float)
        g_bound = 1.0

        def pert(angles, x):
            s = np.tanh(np.mean(x, axis=0))
            ph = _bcast(phases, x) + angles[0]
            return np.sin(ph) * s

        def pert_jac(angles, x):
            sech2 = 1.0 / np.cosh(np.mean(x, axis=0)) ** 2
            ph = _bcast(phases, x) + angles[0]
            row = np.sin(ph) * sech2 / n
            return np.broadcast_to(row[:, None], (n, n) + np.shape(x)[1:]).copy()
    elif perturbation is not None:
        raise ValueError(f"unknown perturbation {perturbation!r}")

    eps0 = float(k.min()) if n > 1 else 0.0
    return TridiagSpec(n=n, rotation=rotation, field=fld, jacobian=jac,
                       delta_signs=tuple(int(s) for s in signs), eps0=eps0,
                       perturbation=pert, perturbation_jacobian=pert_jac, eps=eps, g_bound=g_bound,
                       dissipation=dissipation, box=box, name=name)


def linear_system(matrix, forcing: ForcingSpec | None = None, rotation: RotationVector | None = None,
                  name: str = "linear") -> TridiagSpec:
    """``x' = A x (+ F(theta))``; A need not be tridiagonal or cooperative."""
    a = np.asarray(matrix, dtype=float)
    n = a.shape[0]
    rotation = rotation or (forcing.rotation if forcing is not None else RotationVector((1.0, math.sqrt(2.0))))

    def fld(angles, x):
        out = np.tensordot(a, x, axes=(1, 0))
        if forcing is not None:
            out = out + eval_forcing(forcing, angles, x)
        return out

    def jac(angles, x):
        return np.broadcast_to(a.reshape((n, n) + (1,) * (np.ndim(x) - 1)), (n, n) + np.shape(x)[1:]).copy()

    off_up = np.diag(a, 1) if n > 1 else np.array([])
    off_dn = np.diag(a, -1) if n > 1 else np.array([])
    signs = tuple(int(np.sign(u)) if u != 0 else 1 for u in off_up)
    eps0 = float(min(np.min(np.abs(off_up)), np.min(np.abs(off_dn)))) if n > 1 else 0.0
    return TridiagSpec(n=n, rotation=rotation, field=fld, jacobian=jac, delta_signs=signs, eps0=eps0,
                       box=math.inf, name=name)


__all__ = [
    "IntegrationError", "Orbit", "PreconditionError", "TridiagSpec", "DissipativeReport",
    "check_dissipative_box", "cooperativity_margin", "cubic_chain", "finite_difference_jacobian",
    "gauge_transform", "gauged", "integrate", "linear_system",
]
