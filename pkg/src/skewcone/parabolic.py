"""Method-of-lines discretisation of forced scalar reaction-diffusion equations.

Grids are uniform on [0, 1] with ``h = 1/(N+1)``.  Neumann functions store
the ``N + 2`` nodes ``x_j = j h`` (ends included) and use mirrored ghost
values ``u_{-1} = u_1``, ``u_{N+2} = u_N``; Dirichlet functions store the
``N`` interior nodes with zero end values.  Nonlinearities are called as
``f(angles, x, u, p)`` with ``x, u, p`` shaped ``(n,) + batch``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import sparse
from scipy.integrate import solve_ivp
from scipy.linalg import solve_banded

from .cocycle import gauss_legendre_unit, QUAD_NODES
from .cones import zero_number
from .errors import ConfigurationError, PreconditionError
from .forcing import RotationVector, TorusPoint, base_angles
from .ode import IntegrationError, solve
from .tridiag import Orbit, TridiagSpec

NEUMANN = "neumann"
DIRICHLET = "dirichlet"
MIN_POINTS = 8

# bound constant of the elliptic comparison ||v|| <= C ||u||
CHEMO_C = (3 * math.e**2 - math.e) / (2 * (math.e - 1))

Nonlinearity = Callable[..., np.ndarray]


def _check_bc(bc: str) -> str:
    bc = str(bc).lower()
    if bc not in (NEUMANN, DIRICHLET):
        raise ConfigurationError(f"boundary condition must be neumann or dirichlet, got {bc!r}")
    return bc


def grid_nodes(N: int, bc: str = NEUMANN) -> np.ndarray:
    """Stored node positions for ``N`` interior points."""
    bc = _check_bc(bc)
    if N < MIN_POINTS:
        raise PreconditionError(f"need N >= {MIN_POINTS} interior points, got {N}")
    h = 1.0 / (N + 1)
    j = np.arange(0, N + 2) if bc == NEUMANN else np.arange(1, N + 1)
    return j * h


@dataclass
class GridFunction:
    """Values of a function on the stored nodes of a uniform grid."""

    N: int
    values: np.ndarray
    bc: str = NEUMANN

    def __post_init__(self):
        self.bc = _check_bc(self.bc)
        self.values = np.asarray(self.values, dtype=float)
        if self.N < MIN_POINTS:
            raise PreconditionError(f"need N >= {MIN_POINTS} interior points, got {self.N}")
        expected = self.N + 2 if self.bc == NEUMANN else self.N
        if self.values.shape[0] != expected:
            raise ConfigurationError(f"{self.bc} grid with N={self.N} stores {expected} values, "
                                     f"got {self.values.shape[0]}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid values must be finite")

    @property
    def h(self) -> float:
        return 1.0 / (self.N + 1)

    @property
    def x(self) -> np.ndarray:
        return grid_nodes(self.N, self.bc)

    @classmethod
    def from_function(cls, fun, N: int, bc: str = NEUMANN) -> "GridFunction":
        return cls(N, np.asarray(fun(grid_nodes(N, bc)), dtype=float), bc)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def c1_norm(self) -> float:
        """Discrete C^1 proxy ``||u||_inf + ||D_h u||_inf``."""
        return self.sup_norm() + float(np.max(np.abs(first_derivative(self.values, self.h, self.bc))))

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "value"])
            for xi, vi in zip(self.x, self.values):
                writer.writerow([repr(float(xi)), repr(float(vi))])
        return path


def _padded(u: np.ndarray, bc: str) -> np.ndarray:
    """Values with one ghost/boundary node on each side."""
    if bc == NEUMANN:
        return np.concatenate([u[1:2], u, u[-2:-1]], axis=0)
    zero = np.zeros((1,) + u.shape[1:])
    return np.concatenate([zero, u, zero], axis=0)


def second_derivative(u: np.ndarray, h: float, bc: str) -> np.ndarray:
    w = _padded(u, bc)
    return (w[:-2] - 2.0 * w[1:-1] + w[2:]) / (h * h)


def first_derivative(u: np.ndarray, h: float, bc: str) -> np.ndarray:
    w = _padded(u, bc)
    return (w[2:] - w[:-2]) / (2.0 * h)


def trapezoid_weights(N: int, bc: str) -> np.ndarray:
    h = 1.0 / (N + 1)
    if bc == NEUMANN:
        w = np.full(N + 2, h)
        w[0] = w[-1] = h / 2
        return w
    return np.full(N, h)


def _weighted_integral(w: np.ndarray, u: np.ndarray) -> np.ndarray:
    return np.tensordot(w, u, axes=(0, 0))


# -- elliptic solve for the chemotaxis coupling --


def _helmholtz_bands(N: int, h: float) -> np.ndarray:
    """Banded form of ``-v_xx + v`` on the Neumann ghost grid."""
    n = N + 2
    ab = np.zeros((3, n))
    ab[1] = 2.0 / h**2 + 1.0
    ab[0, 1:] = -1.0 / h**2
    ab[2, :-1] = -1.0 / h**2
    # mirrored ghosts double the inward coupling at the ends
    ab[0, 1] = -2.0 / h**2
    ab[2, -2] = -2.0 / h**2
    return ab


def _solve_v_values(u: np.ndarray, N: int) -> np.ndarray:
    h = 1.0 / (N + 1)
    shape = u.shape
    rhs = u.reshape(shape[0], -1)
    v = solve_banded((1, 1), _helmholtz_bands(N, h), rhs)
    return v.reshape(shape)


def solve_chemo_v(u: GridFunction) -> GridFunction:
    """Discrete solution of ``v_xx - v + u = 0`` with zero Neumann data."""
    if u.bc != NEUMANN:
        raise PreconditionError("the elliptic solve needs Neumann data")
    return GridFunction(u.N, _solve_v_values(u.values, u.N), NEUMANN)


def elliptic_residual(u: GridFunction, v: GridFunction) -> float:
    """``||v_xx - v + u||_inf`` on the discrete grid."""
    return float(np.max(np.abs(second_derivative(v.values, v.h, NEUMANN) - v.values + u.values)))


def chemo_formula_v(u: GridFunction, sign: float = -1.0) -> GridFunction:
    """Closed-form representation of the elliptic solve by trapezoid quadrature.

    The kernel sum as written with ``sign=+1`` solves the equation with the
    opposite sign of ``u`` (it maps ``u = 1`` to ``v = -1``); ``sign=-1``
    yields the solution of ``v_xx - v + u = 0``.
    """
    if u.bc != NEUMANN:
        raise PreconditionError("the closed form assumes Neumann data")
    x = u.x
    w = trapezoid_weights(u.N, NEUMANN)
    uv = u.values
    kern_c = (np.exp(2.0 - x) + np.exp(x)) / (2.0 * (math.e**2 - 1.0))
    c = -np.dot(w * kern_c, uv)
    out = np.empty_like(x)
    for j, xj in enumerate(x):
        if j == 0:
            integral = 0.0
        else:
            yy = x[: j + 1]
            g = 0.5 * (np.exp(xj - yy) - np.exp(yy - xj)) * uv[: j + 1]
            integral = float(np.sum(0.5 * (g[1:] + g[:-1])) * u.h)
        out[j] = c * (np.exp(xj) + np.exp(-xj)) + integral
    return GridFunction(u.N, sign * out, NEUMANN)


# -- problem specification --


@dataclass(frozen=True)
class Perturbation:
    """``kind`` is 'none', 'nonlocal' (c, nu) or 'chemotaxis'."""

    kind: str = "none"
    eps: float = 0.0
    c: Callable | None = None
    nu: Callable | None = None
    c_norm: float = 0.0
    nu_norm: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "nonlocal", "chemotaxis"):
            raise ConfigurationError(f"unknown perturbation kind {self.kind!r}")
        if self.kind == "nonlocal" and (self.c is None or self.nu is None):
            raise ConfigurationError("nonlocal perturbation needs c(angles, x) and nu(x)")


@dataclass(frozen=True)
class ParabolicSpec:
    """``u_t = u_xx + f(theta.t, x, u, u_x) + eps * perturbation``.

    ``dissipation`` holds the declared constants: ``{'M0', 'xi'}`` for the
    linear-growth condition used with nonlocal coupling, ``{'M1', 'xi'}``
    for the quadratic one used with chemotaxis, optionally ``{'delta',
    'zeta'}`` for the sign condition ``u f(u, 0) <= -zeta`` when
    ``|u| >= delta``.
    """

    f: Nonlinearity
    df_du: Nonlinearity
    df_dp: Nonlinearity
    rotation: RotationVector
    N: int = 128
    bc: str = NEUMANN
    perturbation: Perturbation = field(default_factory=Perturbation)
    dissipation: dict = field(default_factory=dict)
    name: str = "parabolic"

    def __post_init__(self):
        object.__setattr__(self, "bc", _check_bc(self.bc))
        if self.N < MIN_POINTS:
            raise PreconditionError(f"need N >= {MIN_POINTS} interior points, got {self.N}")
        if self.perturbation.kind == "chemotaxis" and self.bc != NEUMANN:
            raise ConfigurationError("chemotaxis coupling needs Neumann data")

    @property
    def h(self) -> float:
        return 1.0 / (self.N + 1)

    @property
    def x(self) -> np.ndarray:
        return grid_nodes(self.N, self.bc)

    @property
    def size(self) -> int:
        return self.N + 2 if self.bc == NEUMANN else self.N

    def grid(self, values) -> GridFunction:
        return GridFunction(self.N, values, self.bc)


def _xcol(x: np.ndarray, u: np.ndarray) -> np.ndarray:
    return x.reshape((-1,) + (1,) * (u.ndim - 1))


def _angles_for(angles: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Broadcast angles (m,) or (m, B) against a node axis: (m, 1, B...)."""
    a = np.asarray(angles, dtype=float)
    if a.ndim == 1:
        return a
    return a[:, None, ...]


def reaction(spec: ParabolicSpec, angles, u: np.ndarray) -> np.ndarray:
    """Local part ``u_xx + f(angles, x, u, u_x)``."""
    p = first_derivative(u, spec.h, spec.bc)
    return second_derivative(u, spec.h, spec.bc) + spec.f(_angles_for(angles, u), _xcol(spec.x, u), u, p)


def chemotaxis_term(spec: ParabolicSpec, u: np.ndarray) -> np.ndarray:
    """``-u_x v_x - u v + u^2`` with ``v`` from the elliptic solve."""
    v = _solve_v_values(u, spec.N)
    ux = first_derivative(u, spec.h, NEUMANN)
    vx = first_derivative(v, spec.h, NEUMANN)
    return -ux * vx - u * v + u * u


def nonlocal_term(spec: ParabolicSpec, angles, u: np.ndarray) -> np.ndarray:
    pert = spec.perturbation
    x = spec.x
    w = trapezoid_weights(spec.N, spec.bc) * pert.nu(x)
    integral = _weighted_integral(w, u)
    c = pert.c(_angles_for(angles, u), _xcol(x, u))
    return c * integral


def perturbation_term(spec: ParabolicSpec, angles, u: np.ndarray) -> np.ndarray:
    kind = spec.perturbation.kind
    if kind == "nonlocal":
        return nonlocal_term(spec, angles, u)
    if kind == "chemotaxis":
        return chemotaxis_term(spec, u)
    return np.zeros_like(u)


def _local_jacobian(spec: ParabolicSpec, angles, u: np.ndarray) -> np.ndarray:
    n, h = spec.size, spec.h
    p = first_derivative(u, h, spec.bc)
    a = _angles_for(angles, u)
    xc = _xcol(spec.x, u)
    fu = spec.df_du(a, xc, u, p) * np.ones_like(u)
    fp = spec.df_dp(a, xc, u, p) * np.ones_like(u)
    jac = np.zeros((n, n) + u.shape[1:])
    idx = np.arange(n)
    jac[idx, idx] = -2.0 / h**2 + fu
    jac[idx[1:], idx[:-1]] = 1.0 / h**2 - fp[1:] / (2 * h)
    jac[idx[:-1], idx[1:]] = 1.0 / h**2 + fp[:-1] / (2 * h)
    if spec.bc == NEUMANN:
        # ghost mirrors: the end rows see only the inward neighbour, twice, and no slope
        jac[0, 1] = 2.0 / h**2
        jac[-1, -2] = 2.0 / h**2
        jac[0, 0] = -2.0 / h**2 + fu[0]
        jac[-1, -1] = -2.0 / h**2 + fu[-1]
    return jac


def semidiscretize(spec: ParabolicSpec) -> TridiagSpec:
    """Method-of-lines ODE system for ``spec``.

    The local part is tridiagonal; the perturbation (rank one for the
    nonlocal coupling, dense for chemotaxis) is carried as the
    ``eps``-scaled term of the returned system.
    """
    pert = spec.perturbation
    n = spec.size

    def fld(angles, u):
        return reaction(spec, angles, u)

    def jac(angles, u):
        return _local_jacobian(spec, angles, u)

    extra = {}
    if pert.kind != "none":
        def pfld(angles, u):
            return perturbation_term(spec, angles, u)

        def pjac(angles, u):
            u = np.asarray(u, dtype=float)
            out = np.empty((n, n) + u.shape[1:])
            step = 1e-7
            for j in range(n):
                du = np.zeros_like(u)
                du[j] = step
                out[:, j] = (pfld(angles, u + du) - pfld(angles, u - du)) / (2 * step)
            return out

        bound = pert.c_norm * pert.nu_norm if pert.kind == "nonlocal" else 0.0
        extra = dict(perturbation=pfld, perturbation_jacobian=pjac, eps=pert.eps, g_bound=bound,
                     approximate_jacobian=pert.kind == "chemotaxis")
    return TridiagSpec(n=n, rotation=spec.rotation, field=fld, jacobian=jac, box=math.inf,
                       name=f"{spec.name}-N{spec.N}", **extra)


METHODS = ("dp45", "bdf")


def _sparsity(spec: ParabolicSpec, components: int, batch: int):
    """Jacobian pattern of stacked (component, node, batch) states.

    Nodes couple to their neighbours (all nodes under a nonlocal or
    chemotaxis term); components couple fully; batch members never couple.
    """
    n = spec.size
    if spec.perturbation.kind == "none":
        nodes = sparse.diags([1, 1, 1], [-1, 0, 1], shape=(n, n))
    else:
        nodes = sparse.csr_matrix(np.ones((n, n)))
    block = sparse.kron(np.ones((components, components)), nodes)
    # state layout is C-order over (component, node, batch)
    return sparse.kron(block, sparse.identity(batch)).tocsc()


def _solve_bdf(fun, t_span, y0: np.ndarray, t_eval, tol: float, sparsity):
    shape = y0.shape

    def flat(t, y):
        return np.asarray(fun(t, y.reshape(shape)), dtype=float).ravel()

    res = solve_ivp(flat, t_span, y0.ravel(), method="BDF", t_eval=t_eval, rtol=tol, atol=tol,
                    jac_sparsity=sparsity)
    if not res.success:
        raise IntegrationError(res.message, float(res.t[-1]) if res.t.size else float(t_span[0]))
    return res.t, res.y.T.reshape((len(res.t),) + shape)


def run(spec: ParabolicSpec, theta: TorusPoint, u0, t_span, t_eval=None, tol: float = 1e-7,
        method: str = "dp45") -> Orbit:
    """Orbit of the semidiscrete system; ``u0`` may be a GridFunction or array (batch axes trail).

    ``method='dp45'`` uses the explicit integrator (step size limited by
    ``h^2``); ``'bdf'`` uses the implicit solver with a sparse Jacobian.
    """
    if method not in METHODS:
        raise ConfigurationError(f"method must be one of {METHODS}")
    values = u0.values if isinstance(u0, GridFunction) else np.asarray(u0, dtype=float)
    if values.shape[0] != spec.size:
        raise ConfigurationError(f"initial data has {values.shape[0]} nodes, grid stores {spec.size}")
    system = semidiscretize(spec)
    t_span = (float(t_span[0]), float(t_span[1]))
    t_eval = np.array(t_span) if t_eval is None else np.asarray(t_eval, dtype=float)
    if method == "bdf":
        batch = int(np.prod(values.shape[1:], dtype=int))
        t, y = _solve_bdf(system.rhs(theta), t_span, values, t_eval, tol, _sparsity(spec, 1, batch))
        return Orbit(t, y, theta, spec.rotation)
    sol = solve(system.rhs(theta), t_span, values, tol=tol, t_eval=t_eval)
    return Orbit(sol.t_eval, sol.y_eval, theta, spec.rotation)


# -- dissipativity --


@dataclass(frozen=True)
class DissipativityBounds:
    M_star: float
    M1_star: float
    feasible: bool

    def to_dict(self) -> dict:
        return {"M_star": self.M_star, "M1_star": self.M1_star, "feasible": self.feasible}


def dissipativity_bounds(spec: ParabolicSpec, eps: float | None = None) -> DissipativityBounds:
    """Absorbing sup-norm radius for the perturbed equation.

    Nonlocal coupling: ``M* = M0 / (xi - eps ||c|| ||nu||)``, feasible for
    ``0 <= eps < xi / (||c|| ||nu||)``.  Chemotaxis:
    ``M1* = sqrt(M1 / (xi - (C+1)|eps|))``, feasible for ``|eps| < xi/(C+1)``.
    Infeasible inputs return infinite bounds.
    """
    d = spec.dissipation
    pert = spec.perturbation
    eps = pert.eps if eps is None else float(eps)
    if "xi" not in d:
        raise PreconditionError("dissipation constants must declare xi")
    xi = float(d["xi"])
    m_star = m1_star = math.inf
    feasible = False
    if "M0" in d:
        cn = pert.c_norm * pert.nu_norm
        feasible = eps >= 0 and (cn == 0 or eps < xi / cn)
        if feasible:
            m_star = float(d["M0"]) / (xi - eps * cn)
    if "M1" in d:
        ok = abs(eps) < xi / (CHEMO_C + 1.0)
        if ok:
            m1_star = math.sqrt(float(d["M1"]) / (xi - (CHEMO_C + 1.0) * abs(eps)))
        feasible = ok if "M0" not in d else feasible and ok
    if "M0" not in d and "M1" not in d:
        raise PreconditionError("dissipation constants must declare M0 or M1")
    return DissipativityBounds(m_star, m1_star, feasible)


@dataclass
class StructureReport:
    samples: int
    sign_violations: int
    growth_violations: int
    worst_sign_margin: float
    worst_growth_margin: float


def structure_check(spec: ParabolicSpec, rng: np.random.Generator, samples: int = 1000,
                    u_max: float = 10.0) -> StructureReport:
    """Spot-check the declared growth and sign conditions of ``f``.

    With ``M0``: ``f(u, p) <= -xi u + M0`` for u >= 0 and the mirror for
    u <= 0, at ``p = 0``.  With ``M1``: the same with ``xi u^2`` and ``M1``.
    With ``delta, zeta``: ``u f(u, 0) <= -zeta`` for ``|u| >= delta``.
    """
    d = spec.dissipation
    m = spec.rotation.m
    angles = rng.uniform(0, 2 * math.pi, size=(m, samples))
    x = rng.uniform(0, 1, size=samples)
    u = rng.uniform(-u_max, u_max, size=samples)
    p = np.zeros(samples)
    fv = spec.f(angles, x, u, p)
    sign_v = growth_v = 0
    worst_sign = worst_growth = math.inf
    xi = float(d.get("xi", 0.0))
    if "M0" in d or "M1" in d:
        power = 1 if "M0" in d else 2
        const = float(d.get("M0", d.get("M1", 0.0)))
        bound = -xi * np.sign(u) * np.abs(u) ** power + np.sign(u) * const
        margin = np.where(u >= 0, bound - fv, fv - bound)
        growth_v = int(np.count_nonzero(margin < -1e-12))
        worst_growth = float(margin.min())
    if "delta" in d and "zeta" in d:
        mask = np.abs(u) >= float(d["delta"])
        margin = -float(d["zeta"]) - u[mask] * fv[mask]
        sign_v = int(np.count_nonzero(margin < -1e-12))
        worst_sign = float(margin.min()) if margin.size else math.inf
    return StructureReport(samples, sign_v, growth_v, worst_sign, worst_growth)


# -- linearisation along orbit pairs --


@dataclass
class LinearizedPath:
    t_grid: np.ndarray
    v: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    N: int
    bc: str

    def grid(self, k: int) -> GridFunction:
        return GridFunction(self.N, self.v[k], self.bc)

    def difference_error(self) -> np.ndarray:
        """``||v(t) - (u1 - u2)(t)||_inf`` per output time (and batch)."""
        return np.max(np.abs(self.v - (self.u1 - self.u2)), axis=1)

    def zero_numbers(self, tol: float = 1e-8) -> tuple[np.ndarray, np.ndarray]:
        """Zero numbers and simplicity flags, shape (len(t_grid),) + batch."""
        shape = self.v.shape[:1] + self.v.shape[2:]
        z = np.zeros(shape, dtype=int)
        simple = np.zeros(shape, dtype=bool)
        for idx in np.ndindex(*shape):
            k, rest = idx[0], idx[1:]
            vals = self.v[(k, slice(None)) + rest]
            res = zero_number(GridFunction(self.N, vals, self.bc), tol)
            z[idx], simple[idx] = res.Z, res.all_simple
        return z, simple


def split_meanvalue(spec: ParabolicSpec, angles, u1, u2, nodes: int = QUAD_NODES):
    """Coefficients (a, b) with ``f(u1, p1) - f(u2, p2) = a (p1 - p2) + b (u1 - u2)``.

    ``a`` integrates ``df/dp`` at ``(u1, p2 + s (p1 - p2))`` and ``b``
    integrates ``df/du`` at ``(u2 + s (u1 - u2), p2)``.
    """
    if not isinstance(nodes, (int, np.integer)) or nodes < 1:
        raise ConfigurationError(f"quadrature needs a positive integer node count, got {nodes!r}")
    s, w = gauss_legendre_unit(int(nodes))
    h, bc = spec.h, spec.bc
    p1 = first_derivative(u1, h, bc)
    p2 = first_derivative(u2, h, bc)
    a_ang = _angles_for(angles, u1)
    xc = _xcol(spec.x, u1)
    # nodes on a leading axis; angles and x broadcast against (nodes, n, batch...)
    sk = s.reshape((-1,) + (1,) * u1.ndim)
    # derivatives constant in s may come back without the node axis
    shape = (len(s),) + u1.shape
    fp = np.broadcast_to(spec.df_dp(a_ang, xc, u1, p2 + sk * (p1 - p2)), shape)
    fu = np.broadcast_to(spec.df_du(a_ang, xc, u2 + sk * (u1 - u2), p2), shape)
    return np.tensordot(w, fp, axes=(0, 0)), np.tensordot(w, fu, axes=(0, 0))


def _linear_perturbation(spec: ParabolicSpec, angles, u1, u2, v):
    """Exact difference operator of the perturbation applied to ``v``."""
    kind = spec.perturbation.kind
    if kind == "nonlocal":
        return nonlocal_term(spec, angles, v)
    if kind == "chemotaxis":
        # quadratic form: Q(u1) - Q(u2) = B(d, m) + B(m, d) with m the midpoint
        h = spec.h
        m = 0.5 * (u1 + u2)
        km, kv = _solve_v_values(m, spec.N), _solve_v_values(v, spec.N)
        mx, vx = first_derivative(m, h, NEUMANN), first_derivative(v, h, NEUMANN)
        kmx, kvx = first_derivative(km, h, NEUMANN), first_derivative(kv, h, NEUMANN)
        return -(vx * kmx + mx * kvx) - (v * km + m * kv) + 2.0 * m * v
    return np.zeros_like(v)


def linearized_parabolic(spec: ParabolicSpec, pair, t_eval=None, theta: TorusPoint | None = None,
                         v0=None, tol: float = 1e-8, nodes: int = QUAD_NODES,
                         method: str = "bdf") -> LinearizedPath:
    """Solve the linear equation along an orbit pair.

    ``pair`` is either two Orbits on a common grid (their initial states and
    base point are used) or two initial grids with ``theta`` and
    ``t_eval``.  ``v0`` defaults to ``u1 - u2``.  The pair and ``v`` are
    integrated together so the coefficients are exact at every stage.
    """
    first, second = pair
    if isinstance(first, Orbit):
        if not isinstance(second, Orbit) or first.t_grid.shape != second.t_grid.shape \
                or not np.array_equal(first.t_grid, second.t_grid):
            raise ConfigurationError("orbit pair must share one time grid")
        if first.theta0 != second.theta0:
            raise ConfigurationError("orbit pair must lie over one base trajectory")
        t_eval = first.t_grid if t_eval is None else t_eval
        theta = first.theta0
        u1_0, u2_0 = first.states[0], second.states[0]
    else:
        if theta is None or t_eval is None:
            raise ConfigurationError("initial grids need theta and t_eval")
        u1_0 = first.values if isinstance(first, GridFunction) else np.asarray(first, dtype=float)
        u2_0 = second.values if isinstance(second, GridFunction) else np.asarray(second, dtype=float)
    if u1_0.shape != u2_0.shape or u1_0.shape[0] != spec.size:
        raise ConfigurationError("orbit pair states do not match the grid")
    if not isinstance(nodes, (int, np.integer)) or nodes < 1:
        raise ConfigurationError(f"quadrature needs a positive integer node count, got {nodes!r}")
    v0 = u1_0 - u2_0 if v0 is None else (v0.values if isinstance(v0, GridFunction) else np.asarray(v0, float))
    t_eval = np.asarray(t_eval, dtype=float)
    eps = spec.perturbation.eps
    base = base_angles(theta)
    omega = spec.rotation.as_array().reshape((-1,) + (1,) * (base.ndim - 1))
    h, bc = spec.h, spec.bc

    def fun(t, state):
        angles = base + omega * t
        u1, u2, v = state[0], state[1], state[2]
        du1 = reaction(spec, angles, u1)
        du2 = reaction(spec, angles, u2)
        a, b = split_meanvalue(spec, angles, u1, u2, nodes)
        dv = second_derivative(v, h, bc) + a * first_derivative(v, h, bc) + b * v
        if eps != 0.0:
            du1 = du1 + eps * perturbation_term(spec, angles, u1)
            du2 = du2 + eps * perturbation_term(spec, angles, u2)
            dv = dv + eps * _linear_perturbation(spec, angles, u1, u2, v)
        return np.stack([du1, du2, dv])

    state0 = np.stack([u1_0, u2_0, v0])
    t_span = (float(t_eval[0]), float(t_eval[-1]))
    if method == "bdf":
        batch = int(np.prod(u1_0.shape[1:], dtype=int))
        t_out, y = _solve_bdf(fun, t_span, state0, t_eval, tol, _sparsity(spec, 3, batch))
    elif method == "dp45":
        sol = solve(fun, t_span, state0, tol=tol, t_eval=t_eval)
        t_out, y = sol.t_eval, sol.y_eval
    else:
        raise ConfigurationError(f"method must be one of {METHODS}")
    return LinearizedPath(t_out, y[:, 2], y[:, 0], y[:, 1], spec.N, spec.bc)


# -- reference problems --


def heat_spec(N: int = 128, bc: str = NEUMANN, rotation: RotationVector | None = None) -> ParabolicSpec:
    zero = lambda a, x, u, p: np.zeros_like(u)  # noqa: E731
    return ParabolicSpec(zero, zero, zero, rotation or RotationVector((1.0, math.sqrt(2.0))), N, bc, name="heat")


def heat_convergence(Ns=(16, 32, 64, 128), t: float = 0.1, bc: str = NEUMANN, tol: float = 1e-11,
                     method: str = "bdf") -> dict:
    """Sup-norm errors against the separable solution and successive ratios.

    ``tol`` keeps the time error far below the spatial error at every N.
    """
    errors = []
    exact_mode = np.cos if bc == NEUMANN else np.sin
    for N in Ns:
        spec = heat_spec(N, bc)
        u0 = exact_mode(math.pi * spec.x)
        orbit = run(spec, TorusPoint.zero(2), u0, (0.0, t), tol=tol, method=method)
        exact = math.exp(-math.pi**2 * t) * u0
        errors.append(float(np.max(np.abs(orbit.states[-1] - exact))))
    ratios = [errors[k] / errors[k + 1] for k in range(len(errors) - 1)]
    return {"N": list(Ns), "t": t, "bc": bc, "errors": errors, "ratios": ratios}


def nonlocal_spec(N: int = 32, eps: float = 0.5, rotation: RotationVector | None = None) -> ParabolicSpec:
    """Linear damping with bounded forcing and a nonlocal feedback.

    ``f = -u + (sin a1 + sin a2 cos(pi x)) / 2`` so ``M0 = xi = 1``;
    ``c = cos a2`` and ``nu = 1`` give ``||c|| ||nu|| = 1``.
    """
    def f(a, x, u, p):
        return -u + 0.5 * (np.sin(a[0]) + np.sin(a[1]) * np.cos(math.pi * x))

    def f_u(a, x, u, p):
        return -np.ones_like(u)

    def f_p(a, x, u, p):
        return np.zeros_like(u)

    pert = Perturbation("nonlocal", eps, c=lambda a, x: np.cos(a[1]) * np.ones_like(x),
                        nu=lambda x: np.ones_like(x), c_norm=1.0, nu_norm=1.0)
    return ParabolicSpec(f, f_u, f_p, rotation or RotationVector((1.0, math.sqrt(2.0))), N, NEUMANN, pert,
                         {"M0": 1.0, "xi": 1.0, "delta": 2.0, "zeta": 1.0}, name="nonlocal")


def chemotaxis_spec(N: int = 32, eps: float = 0.1, rotation: RotationVector | None = None) -> ParabolicSpec:
    """Quadratic damping ``f = -7 u|u| + sin(a1) cos(pi x)`` so ``M1 = 1``, ``xi = 7``."""
    def f(a, x, u, p):
        return -7.0 * u * np.abs(u) + np.sin(a[0]) * np.cos(math.pi * x)

    def f_u(a, x, u, p):
        return -14.0 * np.abs(u)

    def f_p(a, x, u, p):
        return np.zeros_like(u)

    return ParabolicSpec(f, f_u, f_p, rotation or RotationVector((1.0, math.sqrt(2.0))), N, NEUMANN,
                         Perturbation("chemotaxis", eps), {"M1": 1.0, "xi": 7.0}, name="chemotaxis")


def bistable_spec(N: int = 128, rotation: RotationVector | None = None) -> ParabolicSpec:
    """``f = u - u^3 + 0.3 sin(a1) cos(pi x) + 0.1 sin(p) sin(a2)``: nonlinear in both u and p."""
    def f(a, x, u, p):
        return u - u**3 + 0.3 * np.sin(a[0]) * np.cos(math.pi * x) + 0.1 * np.sin(p) * np.sin(a[1])

    def f_u(a, x, u, p):
        return 1.0 - 3.0 * u**2

    def f_p(a, x, u, p):
        return 0.1 * np.cos(p) * np.sin(a[1]) * np.ones_like(u)

    return ParabolicSpec(f, f_u, f_p, rotation or RotationVector((1.0, math.sqrt(2.0))), N, NEUMANN,
                         dissipation={"M1": 2.0, "xi": 1.0, "delta": 1.5, "zeta": 1.0}, name="bistable")


@dataclass
class ChemoDiagnostics:
    ratios: np.ndarray
    residuals: np.ndarray

    @property
    def max_ratio(self) -> float:
        return float(np.max(self.ratios))

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residuals))


def chemotaxis_diagnostics(spec: ParabolicSpec, orbit: Orbit) -> ChemoDiagnostics:
    """``||v|| / ||u||`` and the relative elliptic residual at every stored time."""
    ratios, residuals = [], []
    states = orbit.states.reshape(len(orbit.t_grid), spec.size, -1)
    for k in range(states.shape[0]):
        for b in range(states.shape[2]):
            u = GridFunction(spec.N, states[k, :, b], NEUMANN)
            v = solve_chemo_v(u)
            un = max(u.sup_norm(), 1e-300)
            ratios.append(v.sup_norm() / un)
            residuals.append(elliptic_residual(u, v) / un)
    return ChemoDiagnostics(np.array(ratios), np.array(residuals))


__all__ = [
    "CHEMO_C", "ChemoDiagnostics", "DIRICHLET", "DissipativityBounds", "GridFunction", "LinearizedPath",
    "NEUMANN", "ParabolicSpec", "Perturbation", "StructureReport", "bistable_spec", "chemo_formula_v",
    "chemotaxis_diagnostics", "chemotaxis_spec", "dissipativity_bounds", "elliptic_residual",
    "first_derivative", "grid_nodes", "heat_convergence", "heat_spec", "linearized_parabolic",
    "nonlocal_spec", "run", "second_derivative", "semidiscretize", "solve_chemo_v", "split_meanvalue",
    "structure_check", "trapezoid_weights",
]
