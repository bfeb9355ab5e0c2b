import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from platoon_safe import fuzz
from platoon_safe.dynamics import NEG_INF
from platoon_safe.types import P0, P1, P2, P4, CutinTracker, EnvParams, Interval, StateInterval
from platoon_safe.verify import (PrecedingInfo, first_violation, margin, predecessor_lower, safe_distance,
                                 stop_behind, verify)

ENV = EnvParams()


def ego(s=0.0, v=20.0, ws=0.4, wv=0.1):
    return StateInterval(Interval(s, s + ws), Interval(v, v + wv))


def pred_at(gap, v, params=P2, ego_meas=None, a_min=None, ws=0.4, wv=0.1, cutin=None, now=0.0):
    """Predecessor whose rear lower bound is ``gap`` ahead of the ego front upper bound."""
    e = ego_meas or ego()
    front = e.s.hi + gap + params.l
    return PrecedingInfo("p", StateInterval(Interval(front, front + ws), Interval(v, v + wv)), params,
                         params.a_dec if a_min is None else a_min, cutin, now)


def test_far_predecessor_is_safe():
    assert verify(0.5, P0.a_dec, [pred_at(150, 20)], [], ego(), P0, ENV).safe


def test_near_harder_braking_predecessor_is_unsafe():
    e = ego(v=25)
    assert not verify(0.0, P0.a_dec, [pred_at(2.0, 25, params=P4)], [], e, P0, ENV).safe


def test_alert_right_ahead_is_unsafe_and_far_alert_is_safe():
    e = ego(v=10)
    assert not verify(NEG_INF, P1.a_dec, [], [e.s.hi + 1.0], e, P1, ENV).safe
    assert verify(NEG_INF, P1.a_dec, [], [e.s.hi + 100.0], e, P1, ENV).safe
    assert stop_behind(e, e.s.hi + 100.0, P1.a_dec, P1, ENV)
    assert not stop_behind(e, e.s.hi + 1.0, P1.a_dec, P1, ENV)


def test_sensor_range_limits_speed():
    # 25 m/s with 6 m/s^2 brakes needs about 55 m: fine within 200 m of sensing, not within 30 m
    e = ego(v=25)
    assert verify(0.0, P1.a_dec, [], [], e, P1, ENV).safe
    short = EnvParams(s_sensor=30.0)
    assert not verify(0.0, P1.a_dec, [], [], e, P1, short).safe
    assert verify(0.0, P1.a_dec, [], [], e, P1, short, include_sensor=False).safe


def test_rejects_non_negative_a_min():
    with pytest.raises(ValueError):
        verify(0.0, 0.0, [], [], ego(), P0, ENV)


def test_first_violation_and_margin_conventions():
    up = np.array([0.0, 1.0, 2.0, 3.0])
    assert first_violation(up, np.array([10.0])) is None
    assert first_violation(up, np.array([10.0, 2.5, 2.5])) == 2  # up[2]=2 < 2.5, up[3]=3 >= 2.5
    assert first_violation(up, np.array([10.0, 2.0])) == 1
    assert margin(up, np.array([10.0, 5.0])) == pytest.approx(2.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 60), st.floats(5, 25), st.floats(0, 25), st.floats(-2, 1))
def test_verdict_monotone_in_input(gap, v_e, v_p, a):
    e = ego(v=v_e)
    pred = [pred_at(gap, v_p, ego_meas=e)]
    if verify(a, P2.a_dec, pred, [], e, P2, ENV).safe:
        assert verify(a - 0.5, P2.a_dec, pred, [], e, P2, ENV).safe


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 60), st.floats(5, 25), st.floats(0, 25), st.floats(-2, 1), st.floats(0, 3))
def test_weaker_predecessor_limit_keeps_safe(gap, v_e, v_p, a, weaken):
    e = ego(v=v_e)
    strong = pred_at(gap, v_p, ego_meas=e, a_min=-8.0)
    weak = pred_at(gap, v_p, ego_meas=e, a_min=-8.0 + weaken)
    if verify(a, P2.a_dec, [strong], [], e, P2, ENV).safe:
        assert verify(a, P2.a_dec, [weak], [], e, P2, ENV).safe


def test_stronger_own_braking_helps():
    e = ego(v=20)
    p = pred_at(15.0, 20, ego_meas=e, params=P4)
    assert not verify(0.0, P0.a_dec, [p], [], e, P0, ENV).safe
    assert verify(0.0, -9.0, [p], [], e, P0, ENV).safe


def test_cutin_window_shrinks_required_distance():
    tr = CutinTracker.start(0.0, ENV)
    with_cut = pred_at(10, 20, cutin=tr, now=0.0)
    plain = with_cut.without_cutin()
    assert predecessor_lower(with_cut, ENV).final > predecessor_lower(plain, ENV).final


def bisection_safe_distance(e, pred, a_min_ego, params, tol=0.01):
    def ok(g):
        p = pred_at(g, pred.state.v.lo, params=pred.params, ego_meas=e, a_min=pred.a_min_assumed,
                    ws=pred.state.s.width, wv=pred.state.v.width)
        return verify(NEG_INF, a_min_ego, [p], [], e, params, ENV, include_sensor=False).safe
    lo, hi = 0.0, 400.0
    if ok(lo):
        return 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


@settings(max_examples=25, deadline=None)
@given(st.floats(3, 25), st.floats(0, 25), st.sampled_from([P0, P1, P2, P4]), st.sampled_from([P0, P2, P4]))
def test_safe_distance_matches_bisection(v_e, v_p, pe, pp):
    e = ego(v=v_e)
    pred = pred_at(0.0, v_p, params=pp, ego_meas=e)
    closed = safe_distance(e, pred, pe.a_dec, pe, ENV)
    assert closed == pytest.approx(bisection_safe_distance(e, pred, pe.a_dec, pe), abs=0.011)


def test_safe_distance_is_one_step_of_travel_behind_a_fast_weak_predecessor():
    # the ego front one period ahead is compared with the current predecessor rear
    e = ego(v=5)
    d = safe_distance(e, pred_at(0.0, 25, params=P0, ego_meas=e), P4.a_dec, P4, ENV)
    assert 0.0 < d <= e.v.hi * ENV.dt_p


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_verified_inputs_never_collide_in_rollouts(seed):
    case = fuzz.verify_make_case(np.random.default_rng(seed))
    assert fuzz.verify_check_case(case) is None


def test_verify_soundness_fault_hook_is_detected():
    hits = sum(fuzz.verify_check_case(fuzz.verify_make_case(fuzz.case_rng(2, i)), fault=True) is not None
               for i in range(10))
    assert hits > 0
