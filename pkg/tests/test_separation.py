import json
import math

import numpy as np
import pytest
from scipy.linalg import null_space, subspace_angles

from skewcone.cocycle import ConstantCocycle, PerturbedCocycle
from skewcone.errors import DegenerateGeometryError, DegenerateSplittingError, PreconditionError
from skewcone.separation import (ConeParams, Splitting, compute_constants, compute_splitting, compute_splittings,
                                 cone_C_D_W_membership, cone_opening_radius, find_delta0_delta1, frame_path,
                                 lambda0_formula, perturbed_cone_suite, projector, solve_T0, solve_T1,
                                 transport_check)

LINEAR_TEST = -math.sqrt(2.0) * np.eye(3) + np.diag([1.0, 1.0], 1) + np.diag([1.0, 1.0], -1)


def angle(a, b):
    return float(np.max(subspace_angles(a, b)))


def test_swap_matrix_splitting():
    sp = compute_splitting(ConstantCocycle([[0.0, 1.0], [1.0, 0.0]]), 1, horizon=20)
    assert angle(sp.V, np.array([[1.0], [1.0]]) / math.sqrt(2)) < 1e-6
    assert angle(null_space(sp.L.T), np.array([[1.0], [-1.0]])) < 1e-6
    assert sp.gamma == pytest.approx(2.0, abs=1e-4)


def test_diagonal_splitting():
    sp = compute_splitting(ConstantCocycle(np.diag([3.0, 2.0, 1.0])), 2, horizon=30)
    assert angle(sp.V, np.eye(3)[:, :2]) < 1e-6
    assert sp.gamma == pytest.approx(1.0, abs=1e-4)


def test_full_space_splitting():
    sp = compute_splitting(ConstantCocycle(LINEAR_TEST), 3, horizon=30)
    assert np.array_equal(sp.P, np.eye(3)) and not np.any(sp.Q)


def test_projector_is_idempotent():
    sp = compute_splittings(ConstantCocycle(LINEAR_TEST), 30)
    for i in (1, 2):
        assert np.max(np.abs(sp[i].P @ sp[i].P - sp[i].P)) < 1e-10


def test_degenerate_gap_is_an_error():
    with pytest.raises(DegenerateSplittingError):
        compute_splitting(ConstantCocycle(np.eye(2)), 1, horizon=20)


def test_short_horizon_is_rejected():
    with pytest.raises(PreconditionError):
        compute_splitting(ConstantCocycle(np.diag([0.0, -0.1])), 1, horizon=20)


def test_separation_inequality_with_fitted_constants(rng):
    cc = ConstantCocycle(LINEAR_TEST)
    sp = compute_splittings(cc, 30)
    for i in (1, 2):
        s = sp[i]
        w = null_space(s.L.T)
        v = s.V
        for t in np.linspace(1.0, 30.0, 59):
            m = cc.step(0.0, float(t))
            top = np.linalg.svd(m @ w, compute_uv=False)[0]
            bottom = np.linalg.svd(m @ v, compute_uv=False)[-1]
            # absolute slack: expm roundoff is relative to ||T(t)||, not to the decayed image
            assert top <= s.M * math.exp(-s.gamma * t) * bottom + 1e-14 * np.linalg.norm(m, 2)


def test_bundles_are_invariant_under_a_time_dependent_cocycle(rng):
    cc = PerturbedCocycle(ConstantCocycle(LINEAR_TEST), 0.05, seed=7)
    path = frame_path(cc, 0, 12, 40, rng)
    for k in range(1, 12):
        step = cc.step(float(k - 1), 1.0)
        for i in (1, 2):
            moved = step @ path.V[k - 1][:, :i]
            assert angle(moved, path.V[k][:, :i]) <= 1e-5


def test_lambda0_examples():
    assert lambda0_formula(0.01, 2.0, 0.25) == pytest.approx(0.02 + (0.02 + 0.5) / 0.99, rel=1e-14)
    assert lambda0_formula(0.01, 2.0, 0.25) == pytest.approx(0.54525, abs=1e-5)
    assert lambda0_formula(1e-12, 2.0, 0.25) == pytest.approx(0.5, abs=1e-10)


def test_T1_bisection_contract():
    c, M, gamma, r, N0, delta = 100.0, 3.0, 0.8, 1.5, 2, 0.01
    t1 = solve_T1(c, M, gamma, r, N0, delta)
    target = (8 * r) ** (-N0) * delta
    assert c * M * math.exp(-gamma * t1) <= target
    assert c * M * math.exp(-gamma * (t1 - 0.01)) > target


def test_T0_defining_inequality():
    t1, lam0, delta, zeta = 12.0, 0.6, 0.01, 2.0
    t0 = solve_T0(t1, lam0, delta, zeta)
    assert t0 > t1 + 1
    for t in np.linspace(t0, 5 * t0, 40):
        assert (lam0 - delta) ** (t - t1) * (delta + zeta) ** t1 <= lam0**t * (1 + 1e-9)


def _split(v, l, index=1):
    v, l = np.asarray(v, float).reshape(-1, index), np.asarray(l, float).reshape(-1, index)
    p = projector(v, l)
    return Splitting(index, v, l, p, np.eye(len(p)) - p, 1.0, 1.0, np.zeros(len(p)))


def test_membership_examples():
    sp = {1: _split([1.0, 0.0], [1.0, 0.0])}
    assert cone_C_D_W_membership([2.0, 0.0], sp, 1, 0.0, "C")[0]
    member, margin = cone_C_D_W_membership([0.0, 3.0], sp, 1, 0.5, "D")
    assert member and margin == pytest.approx(3.0 * 0.5)
    member, _ = cone_C_D_W_membership([1.0, 0.3], sp, 1, 0.25, "C")
    assert not member


def test_delta0_orthogonal_splitting_is_one(rng):
    base = {1: _split([1.0, 0.0], [1.0, 0.0]), 2: _split(np.eye(2), np.eye(2), 2)}
    delta0, delta1, samples = find_delta0_delta1([base], 1, rng, samples=2000)
    assert delta0 == 1.0 and samples == 2000


def test_delta0_drops_for_rotated_bases(rng):
    a = {1: _split([1.0, 0.0], [1.0, 0.0]), 2: _split(np.eye(2), np.eye(2), 2)}
    c, s = math.cos(math.pi / 3), math.sin(math.pi / 3)
    b = {1: _split([c, s], [c, s]), 2: _split(np.eye(2), np.eye(2), 2)}
    grid = np.linspace(0.02, 0.98, 49)
    delta0, _, _ = find_delta0_delta1([a, b], 1, rng, grid=grid, samples=2000)
    # 2D oracle: the cones first meet on the bisector at 15 degrees, aperture tan 15
    assert delta0 == pytest.approx(grid[grid < math.tan(math.pi / 12)].max())
    assert delta0 < 1.0


def test_hyperplane_containing_range_is_degenerate(rng):
    base = {1: _split([0.0, 1.0], [0.0, 1.0]), 2: _split(np.eye(2), np.eye(2), 2)}
    with pytest.raises(DegenerateGeometryError):
        find_delta0_delta1([base], 1, rng, samples=500)


@pytest.mark.parametrize("v, l", [([1.0, 0.0], [1.0, 0.0]), ([1.0, 0.4], [1.0, -0.3])])
def test_cone_opening_radius(v, l, rng):
    sp = {1: _split(v, l)}
    p, q = sp[1].P, sp[1].Q
    c_p, c_q = np.linalg.norm(p, 2), np.linalg.norm(q, 2)
    s1, s2 = 0.2, 0.5
    rho = cone_opening_radius(s1, s2, c_p, c_q)
    checked = 0
    for _ in range(2000):
        u = rng.standard_normal(2)
        u /= np.linalg.norm(u)
        if not cone_C_D_W_membership(u, sp, 1, s1, "C")[0]:
            continue
        w = rng.standard_normal(2)
        w = u + rho * rng.random() * w / np.linalg.norm(w)
        w /= np.linalg.norm(w)
        if np.linalg.norm(w - u) <= rho:
            assert cone_C_D_W_membership(w, sp, 1, s2, "C")[0]
            checked += 1
    assert checked > 100


@pytest.fixture(scope="module")
def ledger():
    cc = ConstantCocycle(LINEAR_TEST)
    rng = np.random.default_rng(4)
    sp = compute_splittings(cc, 40, rng=rng)
    params = compute_constants(cc, [sp], 0.01, rng=rng, samples=2000)
    return cc, sp, params


def test_constants_ledger(ledger):
    _, _, p = ledger
    assert p.lambda0 < 1
    assert p.delta < min(p.delta0, p.delta1 / (2 + p.delta1))
    assert p.T0 > p.T1 + 1
    assert p.r == max(p.c_P * p.c_Q, 1.0) and p.c == pytest.approx(100.0)
    assert ConeParams.from_dict(json.loads(p.to_json())) == p


def test_splitting_serialises(ledger):
    _, sp, _ = ledger
    back = Splitting.from_dict(json.loads(json.dumps(sp[1].to_dict())))
    assert np.allclose(back.P, sp[1].P, atol=1e-12)


def test_transport_on_a_thousand_vectors(ledger):
    cc, _, params = ledger
    assert transport_check(params, cc, np.random.default_rng(1), count=1000).passed


def test_unperturbed_suite_passes(ledger):
    cc, _, params = ledger
    rep = perturbed_cone_suite(params, cc, PerturbedCocycle(cc, 0.0, 5), np.random.default_rng(2), samples=100)
    assert rep.passed, rep.to_dict()


def test_large_perturbation_breaks_invariance(ledger):
    cc, _, params = ledger
    rep = perturbed_cone_suite(params, cc, PerturbedCocycle(cc, 0.5, 5), np.random.default_rng(2), samples=100)
    assert rep.checks["invariance"].counterexamples
