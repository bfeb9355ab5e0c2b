import numpy as np
import pytest
from hypothesis import given, strategies as st

from platoon_safe.types import (P0, PRESETS, WORST_CASE, CutinTracker, EnvParams, Interval, StateInterval,
                                VehicleParams, VehicleState, interval_measure, measure_state)

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_interval_rejects_empty():
    with pytest.raises(ValueError):
        Interval(1.0, 0.0)


def test_interval_basics():
    iv = Interval(1.0, 3.0)
    assert iv.width == 2.0 and iv.mid == 2.0
    assert 1.0 in iv and 3.0 in iv and 3.1 not in iv
    assert (iv + 1.0) == Interval(2.0, 4.0)
    assert -iv == Interval(-3.0, -1.0)
    assert iv - Interval(0.5, 1.0) == Interval(0.0, 2.5)
    assert iv.clip_lo(2.0) == Interval(2.0, 3.0)
    assert Interval.point(2.0).width == 0


@given(finite, finite, finite, finite, st.floats(0, 1), st.floats(0, 1))
def test_interval_sum_encloses_pointwise_sums(a, b, c, d, u, v):
    x, y = Interval(min(a, b), max(a, b)), Interval(min(c, d), max(c, d))
    px = x.lo + u * x.width
    py = y.lo + v * y.width
    s = x + y
    assert s.lo - 1e-9 <= px + py <= s.hi + 1e-9


@given(finite, st.floats(0, 5), st.integers(0, 2 ** 32 - 1))
def test_measurement_contains_truth_and_respects_width(x, width, seed):
    iv = interval_measure(x, width, seed)
    assert x in iv
    assert iv.width <= width + 1e-9


def test_measurement_is_deterministic_under_seed():
    assert interval_measure(3.0, 0.4, 7) == interval_measure(3.0, 0.4, 7)


def test_measure_state_clips_velocity_at_zero():
    rng = np.random.default_rng(0)
    for _ in range(50):
        m = measure_state(VehicleState(0.0, 0.0), 0.4, 0.1, rng)
        assert m.v.lo >= 0.0 and m.contains(VehicleState(0.0, 0.0))


def test_vehicle_params_validation():
    with pytest.raises(ValueError):
        VehicleParams(a_dec=1.0, a_acc=1, v_max=10, m=1, c=1, A=1, l=1)
    assert P0.with_a_dec(-4.0).a_dec == -4.0


def test_presets_match_vehicle_table():
    assert (P0.a_dec, P0.a_acc, P0.v_max, P0.m, P0.c, P0.A, P0.l) == (-5, 1, 25, 20000, 0.7, 7, 16)
    assert PRESETS["p4"].a_dec == -9 and PRESETS["p3"].m == 20000
    assert (WORST_CASE.a_dec, WORST_CASE.m, WORST_CASE.c, WORST_CASE.A) == (-12, 400, 2, 12.5)


def test_env_defaults_and_validation():
    env = EnvParams()
    assert env.rho == Interval(1.1, 1.3) and env.v_wind == Interval(1.4, 4.2)
    assert env.alpha == Interval(-0.06, 0.06) and env.w == Interval(-0.1, 0.1)
    assert (env.s_sensor, env.t_C, env.a_dec_cutin, env.dt_p) == (200, 4, -1, 0.1)
    with pytest.raises(ValueError):
        EnvParams(w=Interval(0.1, 0.2))
    with pytest.raises(ValueError):
        EnvParams(a_dec_cutin=1.0)


def test_cutin_tracker_remaining():
    env = EnvParams()
    tr = CutinTracker.start(10.0, env)
    assert tr.a_min_observed == -1.0
    assert tr.remaining(11.0, env.t_C) == pytest.approx(3.0)
    assert tr.remaining(20.0, env.t_C) == 0.0
    tr.cleared = True
    assert tr.remaining(10.5, env.t_C) == 0.0


def test_state_interval_shift_and_exact():
    si = StateInterval.exact(VehicleState(1.0, 2.0)).shifted(3.0)
    assert si.s == Interval.point(4.0) and si.v == Interval.point(2.0)
