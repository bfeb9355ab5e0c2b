"""Nominal PD CACC, binary-search fail-safe controller and jerk-minimising recapture planner."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

from .dynamics import NEG_INF, BoundKind, bound_accel_limits, upper_pos
from .types import EnvParams, StateInterval, VehicleParams
from .verify import PrecedingInfo, first_violation, margin, predecessor_lower

DEFAULT_GAINS = (0.8, 1.2)
D_STANDSTILL = 2.0


def nominal_cacc(ego_meas: StateInterval, preceding: Sequence[PrecedingInfo], target_speed: float,
                 headway: float, gains: tuple[float, float] = DEFAULT_GAINS, params: Optional[VehicleParams] = None,
                 d_standstill: float = D_STANDSTILL, a_dec: Optional[float] = None) -> float:
    """PD headway controller on the nearest predecessor, capped by velocity tracking.

    ``preceding`` is ordered nearest first. Uses interval midpoints.
    """
    if headway <= 0:
        raise ValueError("headway must be positive")
    k_p, k_d = gains
    v = ego_meas.v.mid
    a = k_p * (target_speed - v)
    if preceding:
        pred = preceding[0]
        gap = (pred.state.s.mid - pred.params.l) - ego_meas.s.mid
        a = min(a, k_p * (gap - headway * v - d_standstill) + k_d * (pred.state.v.mid - v))
    if params is not None:
        lo = params.a_dec if a_dec is None else a_dec
        a = min(max(a, lo), params.a_acc)
    return a


@dataclass(frozen=True)
class FailSafeConfig:
    a_tol: float = 0.05
    a_search_lo: Optional[float] = None  # default: lower bound of the ego's a_min
    a_search_hi: Optional[float] = None  # default: upper bound of the ego's a_max

    def __post_init__(self):
        if self.a_tol <= 0:
            raise ValueError("a_tol must be positive")
        if self.a_search_lo is not None and self.a_search_hi is not None and not self.a_search_lo < self.a_search_hi:
            raise ValueError("empty search bracket")


def search_bracket(ego_meas: StateInterval, a_min_ego: float, params: VehicleParams, env: EnvParams,
                   cfg: FailSafeConfig) -> tuple[float, float]:
    p = params.with_a_dec(a_min_ego)
    lo = cfg.a_search_lo
    hi = cfg.a_search_hi
    if lo is None:
        lo = bound_accel_limits(BoundKind.LOWER, 0.0, ego_meas, p, env).a_min
    if hi is None:
        hi = bound_accel_limits(BoundKind.UPPER, 0.0, ego_meas, p, env).a_max
    return lo, hi


def fail_safe_margin(a: float, limit_sequence: np.ndarray, ego_meas: StateInterval, a_min_ego: float,
                     params: VehicleParams, env: EnvParams) -> float:
    """min_k limit[k] - UpperPos([a, -inf])[k+1]: positive iff the input is safe."""
    up = upper_pos(ego_meas, [a, NEG_INF], a_min_ego, params, env).positions
    return margin(up, limit_sequence)


def fail_safe_iter(limit_sequence: np.ndarray, ego_meas: StateInterval, a_min_ego: float,
                   params: VehicleParams, env: EnvParams,
                   cfg: FailSafeConfig = FailSafeConfig()) -> Iterator[Optional[float]]:
    """Anytime bisection: yields the best safe input known so far after every iteration.

    The last value yielded is the final answer; ``None`` means no safe input exists.
    """
    lo, hi = search_bracket(ego_meas, a_min_ego, params, env, cfg)

    def f(a):
        return fail_safe_margin(a, limit_sequence, ego_meas, a_min_ego, params, env)

    if not f(lo) > 0:
        yield None
        return
    yield lo
    if f(hi) > 0:
        yield hi - cfg.a_tol
        return
    while hi - lo > cfg.a_tol:
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
        yield lo
    result = hi - cfg.a_tol
    # result <= lo, so it is safe by monotonicity; guard against round-off anyway
    yield result if f(result) > 0 else lo


def fail_safe(limit_sequence: np.ndarray, ego_meas: StateInterval, a_min_ego: float, params: VehicleParams,
              env: EnvParams, cfg: FailSafeConfig = FailSafeConfig()) -> Optional[float]:
    """Least harsh safe input up to ``cfg.a_tol``, or ``None`` if even full braking fails."""
    out = None
    for out in fail_safe_iter(limit_sequence, ego_meas, a_min_ego, params, env, cfg):
        pass
    return out


@dataclass
class RecapPlan:
    inputs: list[float] = field(default_factory=list)  # per Δt_p slot; the final -inf is held
    feasible: bool = False
    objective: float = math.inf
    initial_objective: float = math.inf

    @property
    def first(self) -> float:
        return self.inputs[0] if self.feasible else math.inf


def jerk_cost(inputs: Sequence[float], a_prev: float, n_window: int, dt: float) -> float:
    prev = a_prev
    total = 0.0
    for a in inputs[:n_window]:
        total += ((a - prev) / dt) ** 2
        prev = a
    return total


def _ramp(a_prev: float, a_end: float, n_ramp: int, n_window: int) -> list[float]:
    return [a_prev + (a_end - a_prev) * min(1.0, (k + 1) / n_ramp) for k in range(n_window)]


def recap(ego_meas: StateInterval, cutin_pred: PrecedingInfo, remaining_clear: float, params: VehicleParams,
          env: EnvParams, *, a_prev: float = 0.0, a_min_ego: Optional[float] = None, back_off: float = 0.05,
          a_res: float = 0.01) -> RecapPlan:
    """Smooth braking plan that keeps the ego behind the cut-in vehicle's lower bound.

    The plan covers the remaining clearing time with piecewise-constant slots followed by
    full braking until standstill. Slots ramp linearly from the last applied acceleration
    to a final value; among ramp lengths, the one with least squared jerk is kept. When
    holding the current acceleration is already feasible, the largest feasible constant
    plan is returned so nothing binds unnecessarily.
    """
    if remaining_clear < 0:
        raise ValueError("remaining_clear must be >= 0")
    a_min_ego = params.a_dec if a_min_ego is None else a_min_ego
    dt = env.dt_p
    n_window = max(1, math.ceil(remaining_clear / dt - 1e-9))
    limits = predecessor_lower(cutin_pred, env).positions - back_off
    lo, hi = search_bracket(ego_meas, a_min_ego, params, env, FailSafeConfig())
    a0 = min(max(a_prev, lo), hi)

    def feasible(plan):
        up = upper_pos(ego_meas, plan + [NEG_INF], a_min_ego, params, env).positions
        return first_violation(up, limits) is None

    def best_end(n_ramp):
        # largest feasible final value of a ramp of length n_ramp
        if not feasible(_ramp(a0, lo, n_ramp, n_window)):
            return None
        if feasible(_ramp(a0, hi, n_ramp, n_window)):
            return hi
        a, b = lo, hi
        while b - a > a_res:
            mid = 0.5 * (a + b)
            if feasible(_ramp(a0, mid, n_ramp, n_window)):
                a = mid
            else:
                b = mid
        return a

    a_const = best_end(1)
    if a_const is None:
        return RecapPlan()
    init = [a_const] * n_window
    j_init = jerk_cost(init, a0, n_window, dt)
    best, j_best = init, j_init
    if a_const < a0:
        for n_ramp in sorted({2, 4, 8, 16, 32, n_window}):
            if n_ramp < 2 or n_ramp > n_window:
                continue
            a_end = best_end(n_ramp)
            if a_end is None:
                continue
            plan = _ramp(a0, a_end, n_ramp, n_window)
            j = jerk_cost(plan, a0, n_window, dt)
            if j < j_best:
                best, j_best = plan, j
    return RecapPlan(inputs=best + [NEG_INF], feasible=True, objective=j_best, initial_objective=j_init)
