import math

import numpy as np
import pytest

from skewcone.cocycle import ConstantCocycle, CocyclePoint, propagate
from skewcone.cones import fiber_order
from skewcone.errors import InsufficientRecurrenceError
from skewcone.forcing import RotationVector, TorusPoint, quasi_periodic
from skewcone.harness.config import TridiagSystem
from skewcone.harness.systems import build_tridiag
from skewcone.omega import (INCONCLUSIVE, SINGLE, TWO, DichotomyVerdict, FiberCloud, OmegaClouds, OmegaReport,
                            SignConeFamily, almost_one_cover_test, capture_omega, capture_sampled,
                            classify_trichotomy, dichotomy_check)
from skewcone.separation import SplittingConeFamily, compute_constants, compute_splittings
from skewcone.tridiag import integrate, linear_system

ROT = RotationVector((1.0, math.sqrt(2.0)))
AMP = 0.05


def contractive():
    return linear_system([[-1.0]], forcing=quasi_periodic(AMP, ROT, 1))


@pytest.fixture(scope="module")
def contractive_orbit():
    return integrate(contractive(), TorusPoint.zero(2), [3.0], (0.0, 600.0), tol=1e-10, dense=True)


def test_contractive_fibers_are_single_points(contractive_orbit):
    realign, eta = 10.0, 0.2
    clouds = capture_sampled(contractive(), contractive_orbit, 8, np.random.default_rng(0), 20.0, eta, realign,
                             tol=1e-10)
    # contraction oracle: a base mismatch eta moves the forcing by at most 2 AMP eta,
    # and the unique bounded solution forgets it at rate e^{-realign}
    bound = 2 * AMP * eta * math.exp(-realign)
    for fib in clouds.fibers:
        assert np.ptp(fib.points[:, 0]) <= bound
    rep = classify_trichotomy(clouds)
    assert rep.classification == SINGLE and rep.minimal_count == 1
    cover = almost_one_cover_test(clouds, diameter_tol=1e-4)
    assert cover.fraction_single == 1.0 and cover.max_fiber_diameter < 1e-6


def test_fibers_sit_on_the_bounded_solution(contractive_orbit):
    clouds = capture_sampled(contractive(), contractive_orbit, 4, np.random.default_rng(1), 20.0, 0.2, 10.0,
                             tol=1e-10)
    for fib in clouds.fibers:
        a1, a2 = fib.reference.angles
        # x' = -x + AMP (sin a1 + sin a2): bounded solution per harmonic with unit frequency / sqrt 2
        exact = AMP * ((math.sin(a1) - math.cos(a1)) / 2
                       + (math.sin(a2) - math.sqrt(2) * math.cos(a2)) / 3)
        assert np.allclose(fib.points[:, 0], exact, atol=1e-6)


def test_unforced_system_samples_classical_limit():
    spec = linear_system([[-1.0]], rotation=ROT)
    orbit = integrate(spec, TorusPoint.zero(2), [2.0], (0.0, 800.0), tol=1e-10, dense=True)
    clouds = capture_sampled(spec, orbit, 3, np.random.default_rng(2), 100.0, tol=1e-10)
    # exact limit is 0; the budget is the integrator's absolute tolerance
    for fib in clouds.fibers:
        assert np.max(np.abs(fib.points)) < 10 * 1e-10


def test_short_horizon_lacks_returns(contractive_orbit):
    short = integrate(contractive(), TorusPoint.zero(2), [3.0], (0.0, 30.0), dense=True)
    with pytest.raises(InsufficientRecurrenceError):
        capture_omega(contractive(), short, [TorusPoint((1.0, 2.0))], 5.0)


def test_pitchfork_single_minimal_from_above():
    spec = build_tridiag(TridiagSystem(kind="tridiag", preset="pitchfork"))
    orbit = integrate(spec, TorusPoint.zero(2), [2.0], (0.0, 800.0), tol=1e-10, dense=True)
    clouds = capture_sampled(spec, orbit, 6, np.random.default_rng(3), 50.0, tol=1e-10)
    rep = classify_trichotomy(clouds)
    assert rep.classification == SINGLE
    assert all(0.9 < fib.points[:, 0].mean() < 1.1 for fib in clouds.fibers)


def _cloud(points_per_fiber):
    fibers = [FiberCloud(TorusPoint((0.1 * j, 0.2)), np.arange(len(p), dtype=float), np.asarray(p, float))
              for j, p in enumerate(points_per_fiber)]
    return OmegaClouds(fibers, 0.2, 5.0, 0.0, 100.0)


def test_doubled_cloud_is_never_single(rng):
    base = 1.0 + 1e-5 * rng.standard_normal((20, 1))
    clouds = _cloud([np.concatenate([base, base + 1.0]) for _ in range(5)])
    assert almost_one_cover_test(clouds).fraction_single == 0.0


def test_two_interleaved_clusters_are_two_minimal(rng):
    pts = []
    for _ in range(4):
        low = -1.0 + 1e-4 * rng.standard_normal(15)
        high = 1.0 + 1e-4 * rng.standard_normal(15)
        pts.append(np.column_stack([np.ravel(np.column_stack([low, high]))]))
    rep = classify_trichotomy(_cloud(pts))
    assert rep.classification == TWO and rep.minimal_count == 2
    assert rep.gap == pytest.approx(2.0, abs=1e-2)


def test_report_rejects_three_minimal_sets():
    with pytest.raises(ValueError):
        OmegaReport(SINGLE, 3, [], None)
    assert OmegaReport(INCONCLUSIVE, 3, [], None).minimal_count == 3


def test_verdict_is_one_branch():
    with pytest.raises(ValueError):
        DichotomyVerdict("decay", rate=-1.0, lock_index=1)


@pytest.fixture(scope="module")
def diag_family():
    cc = ConstantCocycle(np.diag([-1.0, -2.0]))
    sp = compute_splittings(cc, 40, rng=np.random.default_rng(0))
    params = compute_constants(cc, [sp], 0.01, rng=np.random.default_rng(0), samples=2000)
    return cc, sp, params


def test_diagonal_differences_lock_in_dominant_cone(diag_family, rng):
    cc, sp, params = diag_family
    t = np.linspace(0, 10, 41)
    for _ in range(10):
        d0 = rng.standard_normal(2)
        diffs = np.array([cc.step(0.0, float(s)) @ d0 for s in t])
        v = dichotomy_check(t, diffs, SplittingConeFamily(sp, params))
        assert v.branch == "cone_lock" and v.lock_index == 1


def test_diagonal_stable_bundle_decays_at_rate_two(diag_family):
    cc, sp, params = diag_family
    t = np.linspace(0, 10, 41)
    u0 = sp[params.N0].Q @ np.array([0.3, 1.0])
    diffs = np.array([cc.step(0.0, float(s)) @ u0 for s in t])
    v = dichotomy_check(t, diffs, SplittingConeFamily(sp, params), math.log(params.lambda0))
    assert v.branch == "decay"
    assert v.rate == pytest.approx(-2.0, rel=0.05)


def test_identical_states_decay_exactly():
    t = np.linspace(0, 1, 5)
    v = dichotomy_check(t, np.zeros((5, 3)), SignConeFamily(3))
    assert v.branch == "decay" and v.rate == -math.inf


def test_pitchfork_pair_locks_with_index_one():
    spec = build_tridiag(TridiagSystem(kind="tridiag", preset="pitchfork"))
    th = TorusPoint.zero(2)
    z = CocyclePoint([2.0], [1.5], th)
    t = np.linspace(0, 20, 81)
    prop = propagate(spec, z, [0.5], 20.0, t_eval=t)
    v = dichotomy_check(t, prop.values, SignConeFamily(1))
    assert v.branch == "cone_lock" and v.lock_index == 1 and v.h_crossings == 0
    assert abs(prop.x[-1, 0] - 1.0) < 0.1 and abs(prop.y[-1, 0] - 1.0) < 0.1
    ox = integrate(spec, th, [2.0], (0, 20), t_eval=t)
    oy = integrate(spec, th, [1.5], (0, 20), t_eval=t)
    assert fiber_order(ox, oy, tail_window=(1.0, 8.0)) == "greater"


def test_lock_index_stable_under_longer_horizons(rng):
    spec = build_tridiag(TridiagSystem(kind="tridiag", preset="chain5"))
    z = CocyclePoint(rng.uniform(-2, 2, 5), rng.uniform(-2, 2, 5), TorusPoint((0.3, 0.4)))
    indices = []
    for horizon in (10.0, 20.0, 40.0):
        t = np.linspace(0, horizon, int(4 * horizon) + 1)
        prop = propagate(spec, z, z.x - z.y, horizon, t_eval=t)
        v = dichotomy_check(t, prop.values, SignConeFamily(5))
        assert v.branch == "cone_lock"
        indices.append(v.lock_index)
    assert all(b <= a for a, b in zip(indices, indices[1:]))


def test_clouds_export_csv(tmp_path):
    clouds = _cloud([np.ones((3, 1)), np.zeros((2, 1))])
    text = clouds.to_csv(tmp_path / "c.csv").read_text().splitlines()
    assert text[0] == "theta_id,t,s,x_1" and len(text) == 6
