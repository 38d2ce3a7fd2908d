"""Integer-valued Lyapunov functionals and the cones they define.

``sigma`` counts sign changes of a vector once its near-zero entries are
removed; ``zero_number`` does the same for grid functions.  Tolerances are
relative to the sup norm of the input, so every verdict is invariant under
``x -> lambda x`` for ``lambda != 0``.

Cones are indexed so that ``C_i = cl{x regular : sigma(x) <= i-1}`` and
``C_n`` is the whole space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

DEFAULT_TOL = 1e-9

INTERIOR = "interior"
BOUNDARY = "boundary"
OUTSIDE = "outside"


@dataclass(frozen=True)
class SignChangeResult:
    """``sigma`` is meaningful only when ``regular``; bounds hold always.

    ``sigma_min``/``sigma_max`` bound the sign-change count over every
    sign assignment of the near-zero entries, i.e. over a small ball.
    ``margin`` is the Euclidean distance to the irregular set divided by
    the norm of the input.
    """

    regular: bool
    sigma: int
    margin: float
    sigma_min: int
    sigma_max: int


@dataclass(frozen=True)
class ConeMembership:
    index: int
    location: str
    margin: float


@dataclass(frozen=True)
class HyperplaneCoord:
    """``x = s * u_plus + h_part`` with ``side`` in {'plus', 'minus', 'H'}."""

    s: float
    h_part: np.ndarray
    side: str


def _sign_change_bounds(signs: np.ndarray) -> tuple[int, int]:
    """Min and max sign changes when entries with sign 0 are free."""
    fixed = np.flatnonzero(signs)
    n = len(signs)
    if len(fixed) == 0:
        return 0, max(n - 1, 0)
    fs = signs[fixed]
    smin = int(np.count_nonzero(fs[1:] != fs[:-1]))
    smax = int(fixed[0]) + int(n - 1 - fixed[-1])
    for a, b, ja, jb in zip(fs[:-1], fs[1:], fixed[:-1], fixed[1:]):
        free = int(jb - ja - 1)
        odd = 1 if a != b else 0
        # a run of `free` zeros gives at most free+1 changes with matching parity
        smax += free + 1 if (free + 1) % 2 == odd else free
    return smin, smax


def _irregular_distance(x: np.ndarray, require_ends: bool = True) -> float:
    """Euclidean distance from x to the exact irregular set."""
    n = len(x)
    best = math.inf
    if require_ends:
        best = min(abs(x[0]), abs(x[-1]))
    for i in range(1, n - 1):
        if x[i - 1] * x[i + 1] < 0:
            d = math.hypot(x[i], min(abs(x[i - 1]), abs(x[i + 1])))
        else:
            d = abs(x[i])
        best = min(best, d)
    return float(best)


def _sign_pattern(x: np.ndarray, tol: float):
    scale = float(np.max(np.abs(x))) if x.size else 0.0
    if scale == 0.0 or not math.isfinite(scale):
        return None, scale
    y = x / scale
    return np.where(np.abs(y) > tol, np.sign(y), 0.0).astype(int), scale


def sigma(x, tol: float = DEFAULT_TOL, require_ends: bool = True) -> SignChangeResult:
    """Sign changes of ``x`` after removing entries with ``|x_i| <= tol ||x||_inf``.

    Regular iff both end entries are above tolerance and every interior
    near-zero entry sits between neighbours of strictly opposite sign.
    The zero vector is irregular.  ``require_ends=False`` drops the end
    conditions (zero Dirichlet data).
    """
    x = np.asarray(x, dtype=float).ravel()
    n = len(x)
    if n < 1:
        raise ValueError("sigma needs a nonempty vector")
    signs, scale = _sign_pattern(x, tol)
    if signs is None:
        return SignChangeResult(False, 0, 0.0, 0, max(n - 1, 0))
    y = x / scale
    regular = True
    if require_ends and (signs[0] == 0 or signs[-1] == 0):
        regular = False
    if regular:
        for i in range(1, n - 1):
            if signs[i] == 0 and not y[i - 1] * y[i + 1] < -tol * tol:
                regular = False
                break
    smin, smax = _sign_change_bounds(signs)
    # on the rescaled vector so tiny inputs do not underflow the norm
    margin = _irregular_distance(y, require_ends) / float(np.linalg.norm(y))
    return SignChangeResult(regular, smin, margin, smin, smax)


def cone_membership_vec(x, i: int, tol: float = DEFAULT_TOL) -> ConeMembership:
    """Three-valued membership of ``x`` in ``C_i``.

    Interior when every sign assignment of the near-zero entries keeps at
    most ``i-1`` sign changes, outside when none does, boundary otherwise.
    The zero vector is reported as boundary of every proper cone.
    """
    x = np.asarray(x, dtype=float).ravel()
    n = len(x)
    if not 1 <= i <= n:
        raise ValueError(f"cone index {i} outside 1..{n}")
    res = sigma(x, tol)
    if i == n:
        return ConeMembership(i, INTERIOR, math.inf)
    if not np.any(x):
        return ConeMembership(i, BOUNDARY, 0.0)
    if res.sigma_max <= i - 1:
        return ConeMembership(i, INTERIOR, res.margin if res.regular else tol)
    if res.sigma_min > i - 1:
        return ConeMembership(i, OUTSIDE, res.margin if res.regular else tol)
    return ConeMembership(i, BOUNDARY, 0.0)


def minimal_interior_index(x, tol: float = DEFAULT_TOL) -> int:
    """Smallest ``i`` with ``x`` interior to ``C_i`` (``n`` at worst)."""
    x = np.asarray(x, dtype=float).ravel()
    return min(sigma(x, tol).sigma_max + 1, len(x))


def _grid_values(u):
    if hasattr(u, "values"):
        return np.asarray(u.values, dtype=float), getattr(u, "bc", "neumann"), getattr(u, "h", None)
    return np.asarray(u, dtype=float), "neumann", None


@dataclass(frozen=True)
class ZeroCount:
    Z: int
    all_simple: bool


def zero_number(u, tol: float = 1e-8) -> ZeroCount:
    """Number of sign changes of grid values, near-zero nodes merged.

    ``all_simple`` fails when a zero is degenerate: a near-zero node whose
    neighbours share a sign, or a near-zero end node under Neumann data
    (a zero there has vanishing slope).  Tolerances are relative to the
    sup norm.
    """
    values, bc, _ = _grid_values(u)
    res = sigma(values, tol, require_ends=str(bc).lower().startswith("n"))
    return ZeroCount(res.sigma_min, res.regular)


def hyperplane_split(x, convention: str = "vector", tol: float = 1e-12) -> HyperplaneCoord:
    """Split ``x`` along ``u_plus`` and the hyperplane ``{pi = 0}``.

    ``vector``: ``pi(x) = x_1``, ``u_plus = e_1``.  ``grid``: ``pi(u) = u(0)``
    with ``u_plus`` the constant function 1.  The side is decided with an
    absolute tolerance relative to ``max(1, ||x||_inf)``.
    """
    values, _, _ = _grid_values(x)
    values = np.asarray(values, dtype=float)
    if convention not in ("vector", "grid"):
        raise ConfigurationError(f"unknown hyperplane convention {convention!r}")
    s = float(values[0])
    if convention == "vector":
        u_plus = np.zeros_like(values)
        u_plus[0] = 1.0
    else:
        u_plus = np.ones_like(values)
    h_part = values - s * u_plus
    thresh = tol * max(1.0, float(np.max(np.abs(values))) if values.size else 1.0)
    side = "plus" if s > thresh else ("minus" if s < -thresh else "H")
    return HyperplaneCoord(s, h_part, side)


def fiber_order(orbit_x, orbit_y, tail_window=(0.0, math.inf), tol: float = 1e-9) -> str:
    """Order of two orbits over one base trajectory by the ``s``-coordinate.

    Returns 'greater'/'less' when ``s(x - y)`` keeps a strict sign beyond
    ``tol`` on the window, 'equal' when ``||x - y||`` stays below ``tol``,
    and 'undecided' otherwise.
    """
    tx, ty = np.asarray(orbit_x.t_grid), np.asarray(orbit_y.t_grid)
    if tx.shape != ty.shape or not np.array_equal(tx, ty):
        raise ConfigurationError("orbits are not on a common time grid")
    if getattr(orbit_x, "theta0", None) != getattr(orbit_y, "theta0", None):
        raise ConfigurationError("orbits lie over different base trajectories")
    lo, hi = tail_window
    mask = (tx >= lo) & (tx <= hi)
    if not mask.any():
        raise ConfigurationError("tail window contains no grid points")
    diff = np.asarray(orbit_x.states)[mask] - np.asarray(orbit_y.states)[mask]
    diff = diff.reshape(len(diff), -1)
    if np.all(np.max(np.abs(diff), axis=1) < tol):
        return "equal"
    s = diff[:, 0]
    if np.all(s > tol):
        return "greater"
    if np.all(s < -tol):
        return "less"
    return "undecided"
