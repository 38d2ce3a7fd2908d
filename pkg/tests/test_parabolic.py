import math

import numpy as np
import pytest

from skewcone.errors import ConfigurationError
from skewcone.forcing import TorusPoint
from skewcone.parabolic import (CHEMO_C, DIRICHLET, NEUMANN, GridFunction, chemo_formula_v, chemotaxis_spec,
                                bistable_spec, dissipativity_bounds, elliptic_residual, heat_convergence,
                                heat_spec, linearized_parabolic, nonlocal_spec, run, semidiscretize, solve_chemo_v,
                                structure_check)

THETA = TorusPoint((0.4, 1.3))


def test_chemotaxis_constant_value():
    e = math.e
    assert CHEMO_C == pytest.approx((3 * e**2 - e) / (2 * (e - 1)), rel=1e-12)
    # the quoted 5.6595 rounds the exact value 5.659399... upward
    assert CHEMO_C <= 5.6595


@pytest.mark.parametrize("bc, mode", [(NEUMANN, np.cos), (DIRICHLET, np.sin)])
def test_heat_matches_semidiscrete_eigenmode(bc, mode):
    # the grid samples of cos(pi x) / sin(pi x) are exact eigenvectors of the
    # three-point Laplacian with eigenvalue -(2 - 2 cos(pi h)) / h^2
    spec = heat_spec(32, bc)
    u0 = mode(math.pi * spec.x)
    lam = (2 - 2 * math.cos(math.pi * spec.h)) / spec.h**2
    orbit = run(spec, THETA, u0, (0.0, 0.1), tol=1e-10)
    assert np.max(np.abs(orbit.states[-1] - math.exp(-lam * 0.1) * u0)) < 1e-8


@pytest.mark.parametrize("bc", [NEUMANN, DIRICHLET])
def test_heat_spatial_error_is_second_order(bc):
    r = heat_convergence((16, 32, 64), 0.1, bc)
    # leading term pi^4 t e^{-pi^2 t} h^2 / 12 of the eigenvalue defect
    lead = math.pi**4 * 0.1 * math.exp(-math.pi**2 * 0.1) / 12
    for N, err in zip(r["N"], r["errors"]):
        assert err * (N + 1) ** 2 == pytest.approx(lead, rel=0.05)
    assert all(abs(q - 4) < 0.5 for q in r["ratios"])


def test_constant_is_preserved_with_neumann_data():
    spec = heat_spec(32)
    orbit = run(spec, THETA, np.ones(spec.size), (0.0, 1.0))
    assert np.max(np.abs(orbit.states - 1.0)) < 1e-14


def test_semidiscrete_system_is_tridiagonal_plus_rank_one():
    ang, u = np.array([0.3, 0.9]), np.zeros(18)
    local = semidiscretize(nonlocal_spec(16, 0.0)).full_jacobian(ang, u)
    full = semidiscretize(nonlocal_spec(16, 0.5)).full_jacobian(ang, u)
    assert np.array_equal(local, np.triu(np.tril(local, 1), -1))
    assert np.linalg.matrix_rank(full - local, tol=1e-12) == 1


def test_elliptic_solve_examples(rng):
    N = 64
    one = solve_chemo_v(GridFunction(N, np.ones(N + 2)))
    assert np.max(np.abs(one.values - 1.0)) < 1e-12
    zero = solve_chemo_v(GridFunction(N, np.zeros(N + 2)))
    assert not np.any(zero.values)
    worst = 0.0
    for _ in range(1000):
        u = rng.uniform(-1, 1, size=N + 2)
        u /= np.max(np.abs(u))
        gu = GridFunction(N, u)
        v = solve_chemo_v(gu)
        worst = max(worst, v.sup_norm())
        assert elliptic_residual(gu, v) <= 1e-6
    assert worst <= CHEMO_C


def test_closed_form_needs_the_sign_flip():
    u = GridFunction(200, np.ones(202))
    assert np.max(np.abs(chemo_formula_v(u, sign=+1.0).values + 1.0)) < 1e-3
    assert np.max(np.abs(chemo_formula_v(u).values - 1.0)) < 1e-3
    w = GridFunction.from_function(lambda x: np.cos(math.pi * x) + x**2, 200)
    assert np.max(np.abs(chemo_formula_v(w).values - solve_chemo_v(w).values)) < 1e-3


def test_dissipativity_bounds_examples():
    assert dissipativity_bounds(nonlocal_spec(eps=0.5)).M_star == pytest.approx(2.0)
    chemo = dissipativity_bounds(chemotaxis_spec(eps=0.0))
    assert chemo.M1_star == pytest.approx(math.sqrt(1 / 7), abs=1e-12)
    assert chemo.M1_star == pytest.approx(0.37796, abs=1e-5)
    edge = dissipativity_bounds(nonlocal_spec(eps=1.0))
    assert not edge.feasible and math.isinf(edge.M_star)


def test_reference_nonlinearities_meet_declared_conditions(rng):
    for spec in (nonlocal_spec(), chemotaxis_spec(), bistable_spec(32)):
        rep = structure_check(spec, rng, samples=1000)
        assert rep.sign_violations == 0 and rep.growth_violations == 0


def _starts(spec, rng, scale=1.0):
    x = spec.x
    a = rng.uniform(-1, 1, size=(4, 1))
    return scale * (np.cos(math.pi * np.arange(4)[:, None] * x[None]) * a).sum(axis=0)


def test_linearized_equal_orbits_give_zero():
    spec = bistable_spec(32)
    u = np.cos(math.pi * spec.x)
    path = linearized_parabolic(spec, (u, u), np.linspace(0, 0.5, 6), theta=THETA)
    assert not np.any(path.v)


def test_linearized_linear_problem_is_exact(rng):
    spec = nonlocal_spec(32, 0.5)
    path = linearized_parabolic(spec, (_starts(spec, rng), _starts(spec, rng)), np.linspace(0, 1, 11), theta=THETA,
                                tol=1e-10)
    assert np.max(path.difference_error()) <= 1e-9


def test_linearized_cubic_problem_tracks_difference(rng):
    tol = 1e-8
    spec = bistable_spec(32)
    path = linearized_parabolic(spec, (_starts(spec, rng), _starts(spec, rng)), np.linspace(0, 1, 5), theta=THETA,
                                tol=tol)
    assert path.difference_error()[-1] <= 10 * tol


def test_linearized_chemotaxis_tracks_difference(rng):
    tol = 1e-8
    spec = chemotaxis_spec(32, 0.1)
    path = linearized_parabolic(spec, (_starts(spec, rng), _starts(spec, rng)), np.linspace(0, 1, 5), theta=THETA,
                                tol=tol)
    assert path.difference_error()[-1] <= 10 * tol


@pytest.mark.parametrize("nodes", [0, 2.5])
def test_linearized_bad_node_count(nodes):
    spec = bistable_spec(32)
    u = np.ones(spec.size)
    with pytest.raises(ConfigurationError):
        linearized_parabolic(spec, (u, u), [0.0, 0.1], theta=THETA, nodes=nodes)


def test_zero_number_does_not_increase_along_linearized_runs(rng):
    spec = bistable_spec(64)
    t_eval = np.linspace(0, 0.5, 26)
    u1 = np.stack([_starts(spec, rng) for _ in range(4)], axis=1)
    u2 = np.stack([_starts(spec, rng) for _ in range(4)], axis=1)
    ang = rng.uniform(0, 2 * math.pi, size=(2, 4))
    z, simple = linearized_parabolic(spec, (u1, u2), t_eval, theta=ang).zero_numbers()
    for b in range(4):
        regular = z[simple[:, b], b]
        assert np.all(np.diff(regular) <= 0)


def test_grid_function_validation():
    with pytest.raises(ConfigurationError):
        GridFunction(8, np.zeros(8), NEUMANN)
    with pytest.raises(ConfigurationError):
        GridFunction(8, np.zeros(8), "periodic")
