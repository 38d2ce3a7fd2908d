import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skewcone.forcing import (ForcingDomainError, ForcingSpec, Mode, RotationVector, TorusPoint, advance_base,
                              angles_at, eval_forcing, find_almost_period, quasi_periodic, return_times)

ROT = RotationVector((1.0, math.sqrt(2.0)))


def test_advance_base_identity():
    assert advance_base(TorusPoint((0.0, 0.0)), ROT, 0.0).angles == (0.0, 0.0)


def test_advance_base_full_turn_of_first_angle():
    out = advance_base(TorusPoint((0.0, 0.0)), ROT, 2 * math.pi)
    assert TorusPoint((0.0,)).distance(TorusPoint((out.angles[0],))) < 1e-12
    assert out.angles[1] == pytest.approx(math.fmod(2 * math.pi * math.sqrt(2.0), 2 * math.pi), abs=1e-12)


def test_advance_base_group_law_example():
    th = TorusPoint((0.4, 5.9))
    a = advance_base(advance_base(th, ROT, 1.3), ROT, 0.7)
    assert a.distance(advance_base(th, ROT, 2.0)) < 1e-12


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 2 * math.pi), st.floats(0, 2 * math.pi), st.floats(-50, 50), st.floats(-50, 50))
def test_advance_base_flow_property(a, b, s, t):
    th = TorusPoint((a, b))
    assert advance_base(advance_base(th, ROT, s), ROT, t).distance(advance_base(th, ROT, s + t)) < 1e-12


def test_rational_rotation_rejected():
    with pytest.raises(ValueError):
        RotationVector((1.0, 2.0))


def test_single_mode_sine_convention():
    spec = ForcingSpec((Mode((1, 0), 1.0),), ROT)
    assert eval_forcing(spec, TorusPoint((math.pi / 2, 0.3)), np.zeros(1))[0] == pytest.approx(1.0, abs=1e-15)


def test_empty_mode_list_is_zero():
    spec = ForcingSpec((), ROT)
    assert np.array_equal(eval_forcing(spec, TorusPoint((1.0, 2.0)), np.ones(3)), np.zeros(3))


def test_quasi_periodic_matches_closed_form():
    spec = quasi_periodic(1.0, ROT, 1)
    t = np.linspace(0.0, 100.0, 5001)
    ang = angles_at(TorusPoint.zero(2), ROT, t)
    values = eval_forcing(spec, ang, np.zeros((1, t.size)))[0]
    assert np.max(np.abs(values - (np.sin(t) + np.sin(math.sqrt(2.0) * t)))) <= 1e-12


def test_state_outside_box_is_domain_error():
    spec = quasi_periodic(0.05, ROT, 2, box=5.0)
    with pytest.raises(ForcingDomainError):
        eval_forcing(spec, TorusPoint.zero(2), np.array([0.0, 6.0]))


def test_sup_bound_on_random_samples(rng):
    spec = quasi_periodic(0.05, ROT, 3, box=5.0)
    ang = rng.uniform(0, 2 * math.pi, size=(2, 10_000))
    x = rng.uniform(-5, 5, size=(3, 10_000))
    vals = eval_forcing(spec, ang, x)
    assert np.all(np.isfinite(vals))
    assert np.max(np.abs(vals)) < spec.sup_bound()


def test_almost_period_of_sine_is_two_pi():
    dt = 2 * math.pi / 1000
    t = np.arange(0, 4001) * dt
    tau = find_almost_period(np.sin(t), dt, 1e-6)
    assert tau == pytest.approx(2 * math.pi, abs=dt)


def _qp(t):
    return np.sin(t) + np.sin(math.sqrt(2.0) * t)


def test_almost_period_of_quasi_periodic_sum():
    dt, horizon, eps = 0.01, 400.0, 0.1
    t = np.arange(0.0, horizon + dt / 2, dt)
    f = _qp(t)
    tau = find_almost_period(f, dt, eps)
    assert tau is not None
    k = int(round(tau / dt))
    # independent brute-force oracle: every shorter shift fails, this one works
    gaps = [np.max(np.abs(f[j:] - f[:-j])) for j in range(1, k + 1)]
    assert all(g >= eps for g in gaps[:-1]) and gaps[-1] < eps
    # 10x refined re-check of the defining inequality within 2 eps
    fine = np.arange(0.0, horizon - tau, dt / 10)
    assert np.max(np.abs(_qp(fine + tau) - _qp(fine))) < 2 * eps


def test_almost_period_of_constant_is_grid_step():
    assert find_almost_period(np.full(100, 3.0), 0.1, 1e-9) == pytest.approx(0.1)


def test_almost_period_short_horizon_is_none():
    t = np.arange(0, 30) * 0.1
    assert find_almost_period(np.sin(t), 0.1, 1e-6) is None


def test_return_times_come_within_eta():
    th0 = TorusPoint((0.0, 0.0))
    target = TorusPoint((1.0, 2.0))
    times = return_times(th0, ROT, target, 0.05, 0.0, 2000.0)
    assert len(times) > 0
    for t in times:
        assert advance_base(th0, ROT, t).distance(target) < 0.05
