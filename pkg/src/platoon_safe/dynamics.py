"""Saturated longitudinal vehicle model and guaranteed reachable-position bounds.

Bound trajectories enclose every behaviour of a vehicle whose input trajectory is
non-increasing in time: the lower bound uses the input shifted one planning period ahead,
the weakest acceleration limits and the worst disturbance; the upper bound uses the
zero-order-hold input, the strongest limits and the best disturbance.
"""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels
from .types import CutinTracker, EnvParams, Interval, StateInterval, VehicleParams, VehicleState

NEG_INF = float("-inf")
DEFAULT_SUBSTEPS = 10
DEFAULT_HORIZON_CAP = 3000


class HorizonTooShort(RuntimeError):
    """Velocity did not reach zero within the horizon cap."""


def a_drag(v: float, rho: float, c: float, A: float, m: float, v_wind: float) -> float:
    return -(1.0 / (2.0 * m)) * rho * c * A * (v + v_wind) ** 2


def a_incline(alpha: float, g: float) -> float:
    return -g * math.sin(alpha)


@dataclass(frozen=True)
class AccelLimits:
    a_min: float
    a_max: float

    def clamp(self, a_d: float) -> float:
        if a_d < self.a_min:
            return self.a_min
        if a_d > self.a_max:
            return self.a_max
        return a_d


class BoundKind(enum.Enum):
    LOWER = "lower"
    UPPER = "upper"


def accel_limits(t: float, state: VehicleState, params: VehicleParams, env: EnvParams,
                 cutin: Optional[CutinTracker] = None,
                 alpha_at: Optional[Callable[[float], float]] = None,
                 rho: Optional[float] = None, v_wind: Optional[float] = None) -> AccelLimits:
    """Exact overall acceleration limits of a vehicle.

    ``alpha_at`` maps a road position to the incline; ``rho`` and ``v_wind`` default to the
    interval midpoints of ``env``. With an active cut-in tracker whose clearing time has
    not elapsed, the lower limit is the assumed cut-in deceleration.
    """
    alpha = alpha_at(state.s) if alpha_at is not None else 0.0
    rho = env.rho.mid if rho is None else rho
    v_wind = env.v_wind.mid if v_wind is None else v_wind
    inc = a_incline(alpha, env.g)
    drag = a_drag(state.v, rho, params.c, params.A, params.m, v_wind)
    a_max = params.a_acc + inc + drag
    if cutin is not None and cutin.remaining(t, env.t_C) > 0:
        a_min = cutin.a_min_observed
    else:
        a_min = params.a_dec + inc + drag
    return AccelLimits(a_min, a_max)


def _drag_coeff(params: VehicleParams, rho: float) -> float:
    return rho * params.c * params.A / (2.0 * params.m)


def _extreme_sq(v: Interval, v_wind: Interval, upper: bool) -> float:
    # extremes of (v + v_wind)^2 over the box
    u = v + v_wind
    if upper:
        return 0.0 if u.lo <= 0.0 <= u.hi else min(u.lo ** 2, u.hi ** 2)
    return max(u.lo ** 2, u.hi ** 2)


def bound_accel_limits(kind: BoundKind, dt_step: float, state: StateInterval, params: VehicleParams,
                       env: EnvParams) -> AccelLimits:
    """Acceleration limits valid for every corner of the measurement box over ``dt_step``.

    The reachable velocity interval over ``dt_step`` is widened by the extreme physical
    accelerations; drag, incline and density are evaluated at all corners and the minimum
    (LOWER) or maximum (UPPER) is taken.
    """
    if dt_step < 0:
        raise ValueError("dt_step must be >= 0")
    upper = kind is BoundKind.UPPER
    # crude envelope of the acceleration magnitude to widen the velocity interval
    worst_drag = _drag_coeff(params, env.rho.hi) * _extreme_sq(state.v.clip_lo(0.0), env.v_wind, False)
    a_lo = params.a_dec - env.g * math.sin(env.alpha.hi) - worst_drag + env.w.lo
    a_hi = params.a_acc - env.g * math.sin(env.alpha.lo) + env.w.hi
    v_reach = Interval(max(0.0, state.v.lo + min(0.0, a_lo) * dt_step),
                       min(params.v_max, state.v.hi + max(0.0, a_hi) * dt_step))
    if v_reach.lo > v_reach.hi:
        v_reach = Interval(v_reach.hi, v_reach.hi)
    mins, maxs = [], []
    for alpha, rho, vw, v in itertools.product((env.alpha.lo, env.alpha.hi), (env.rho.lo, env.rho.hi),
                                               (env.v_wind.lo, env.v_wind.hi), (v_reach.lo, v_reach.hi)):
        inc = a_incline(alpha, env.g)
        drag = a_drag(v, rho, params.c, params.A, params.m, vw)
        mins.append(params.a_dec + inc + drag)
        maxs.append(params.a_acc + inc + drag)
    if upper:
        # drag may vanish inside the wind interval
        u = v_reach + env.v_wind
        if u.lo <= 0.0 <= u.hi:
            inc = a_incline(env.alpha.lo, env.g)
            mins.append(params.a_dec + inc)
            maxs.append(params.a_acc + inc)
        return AccelLimits(max(mins), max(maxs))
    return AccelLimits(min(mins), min(maxs))


def step_model(state: VehicleState, a_d: float, w: float, limits: AccelLimits, dt: float,
               v_max: float) -> VehicleState:
    """Advance the saturated model over ``dt`` with limits held constant (closed form)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    acc = limits.clamp(a_d) + w
    s, v = state.s, state.v
    if (v <= 0.0 and acc <= 0.0) or (v >= v_max and acc >= 0.0):
        v = min(max(v, 0.0), v_max)
        return VehicleState(s + v * dt, v)
    v_end = v + acc * dt
    if v_end < 0.0:
        tau = v / -acc
        return VehicleState(s + v * tau + 0.5 * acc * tau * tau, 0.0)
    if v_end > v_max:
        tau = (v_max - v) / acc
        return VehicleState(s + v * tau + 0.5 * acc * tau * tau + v_max * (dt - tau), v_max)
    return VehicleState(s + v * dt + 0.5 * acc * dt * dt, v_end)


@dataclass(frozen=True)
class BoundTrajectory:
    positions: np.ndarray
    stopped_at: int

    def __len__(self) -> int:
        return len(self.positions)

    def at(self, k: int) -> float:
        """Position at grid index ``k``; constant beyond the stop index."""
        return float(self.positions[min(k, len(self.positions) - 1)])

    def padded(self, n: int) -> np.ndarray:
        if n <= len(self.positions):
            return self.positions[:n]
        return np.concatenate([self.positions, np.full(n - len(self.positions), self.positions[-1])])

    @property
    def final(self) -> float:
        return float(self.positions[-1])


def _inputs_array(a_d_traj) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(a_d_traj, dtype=float))
    if arr.size == 0:
        raise ValueError("empty input trajectory")
    return arr


def _bound(kind: BoundKind, x_meas: StateInterval, inputs: np.ndarray, a_dec: float, params: VehicleParams,
           env: EnvParams, horizon_cap: int, require_closure: bool, cutin_limit: float,
           cutin_time: float, n_sub: int) -> BoundTrajectory:
    upper = kind is BoundKind.UPPER
    if upper:
        s0, v0 = x_meas.s.hi, min(x_meas.v.hi, params.v_max)
        inc = a_incline(env.alpha.lo, env.g)
        kd = _drag_coeff(params, env.rho.lo)
        w = env.w.hi
    else:
        s0, v0 = x_meas.s.lo, max(x_meas.v.lo, 0.0)
        inc = a_incline(env.alpha.hi, env.g)
        kd = _drag_coeff(params, env.rho.hi)
        w = env.w.lo
    pos, stopped_at, closed = _kernels.integrate_bound(
        float(s0), float(v0), inputs, float(env.dt_p), int(n_sub), int(horizon_cap), float(a_dec),
        float(params.a_acc), float(params.v_max), float(inc), float(kd), float(env.v_wind.lo),
        float(env.v_wind.hi), upper, float(w), float(cutin_limit), float(cutin_time))
    if not closed and require_closure:
        raise HorizonTooShort(f"velocity not zero after {horizon_cap} steps")
    return BoundTrajectory(pos, int(stopped_at))


def lower_pos(x_meas: StateInterval, a_d_traj: Sequence[float], a_dec_override: float, params: VehicleParams,
              env: EnvParams, horizon_cap: int = DEFAULT_HORIZON_CAP, *, require_closure: bool = True,
              cutin: Optional[tuple[float, float]] = None, n_sub: int = DEFAULT_SUBSTEPS) -> BoundTrajectory:
    """Lower bounds of the REAR position at the planning grid.

    ``a_d_traj`` holds per-slot inputs (last value held); slot k of the bound applies the
    input of slot k+1. ``cutin`` is ``(a_min_cutin, remaining_clearing_time)``.
    """
    inputs = _inputs_array(a_d_traj)
    shifted = inputs[1:] if inputs.size > 1 else inputs
    cut_lim, cut_time = cutin if cutin is not None else (0.0, 0.0)
    traj = _bound(BoundKind.LOWER, x_meas, np.ascontiguousarray(shifted), a_dec_override, params, env,
                  horizon_cap, require_closure, cut_lim, cut_time, n_sub)
    return BoundTrajectory(traj.positions - params.l, traj.stopped_at)


def upper_pos(x_meas: StateInterval, a_d_traj: Sequence[float], a_dec_override: float, params: VehicleParams,
              env: EnvParams, horizon_cap: int = DEFAULT_HORIZON_CAP, *, require_closure: bool = True,
              cutin: Optional[tuple[float, float]] = None, n_sub: int = DEFAULT_SUBSTEPS) -> BoundTrajectory:
    """Upper bounds of the FRONT position at the planning grid (zero-order-hold input)."""
    inputs = _inputs_array(a_d_traj)
    cut_lim, cut_time = cutin if cutin is not None else (0.0, 0.0)
    return _bound(BoundKind.UPPER, x_meas, inputs, a_dec_override, params, env, horizon_cap,
                  require_closure, cut_lim, cut_time, n_sub)


def flat_road(s: float) -> float:
    return 0.0


@dataclass(frozen=True)
class TrueEnv:
    """Actual (unknown to the vehicles) environment values used by the physics."""

    rho: float = 1.2
    v_wind: float = 2.8
    alpha_at: Callable[[float], float] = flat_road


def true_accel(s: float, v: float, a_d: float, w: float, params: VehicleParams, a_dec: float,
               env: EnvParams, true_env: TrueEnv) -> float:
    inc = a_incline(true_env.alpha_at(s), env.g)
    drag = a_drag(v, true_env.rho, params.c, params.A, params.m, true_env.v_wind)
    a_min = a_dec + inc + drag
    a_max = params.a_acc + inc + drag
    a = a_d
    if a < a_min:
        a = a_min
    elif a > a_max:
        a = a_max
    return a + w


def advance(state: VehicleState, a_d: float, w: float, params: VehicleParams, a_dec: float, env: EnvParams,
            true_env: TrueEnv, dt: float, n_sub: int = DEFAULT_SUBSTEPS,
            on_substep: Optional[Callable[[float, VehicleState, float], None]] = None) -> VehicleState:
    """Integrate the actual vehicle dynamics (position-dependent incline) with RK4 substeps.

    ``on_substep(t_offset, state, acceleration)`` is called after every substep.
    """
    h = dt / n_sub
    s, v = state.s, state.v
    v_max = params.v_max

    def f(s_, v_):
        return true_accel(s_, v_, a_d, w, params, a_dec, env, true_env)

    def rk4(s_, v_, tau):
        k1v = f(s_, v_)
        k2v = f(s_ + 0.5 * tau * v_, v_ + 0.5 * tau * k1v)
        v2 = v_ + 0.5 * tau * k1v
        k3v = f(s_ + 0.5 * tau * v2, v_ + 0.5 * tau * k2v)
        v3 = v_ + 0.5 * tau * k2v
        k4v = f(s_ + tau * v3, v_ + tau * k3v)
        v4 = v_ + tau * k3v
        return (s_ + tau / 6.0 * (v_ + 2 * v2 + 2 * v3 + v4),
                v_ + tau / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v))

    for j in range(n_sub):
        acc = f(s, v)
        if v <= 0.0 and acc <= 0.0:
            v, acc = 0.0, 0.0
        elif v >= v_max and acc >= 0.0:
            s, v, acc = s + v_max * h, v_max, 0.0
        else:
            s1, v1 = rk4(s, v, h)
            if 0.0 <= v1 <= v_max:
                s, v = s1, v1
            else:
                bound = 0.0 if v1 < 0.0 else v_max
                lo, hi = 0.0, h
                while hi - lo > 1e-9:
                    mid = 0.5 * (lo + hi)
                    vm = rk4(s, v, mid)[1]
                    if (vm < 0.0) if bound == 0.0 else (vm > v_max):
                        hi = mid
                    else:
                        lo = mid
                tau = 0.5 * (lo + hi)
                s_tau = rk4(s, v, tau)[0]
                s = s_tau if bound == 0.0 else s_tau + v_max * (h - tau)
                v = bound
        if on_substep is not None:
            on_substep((j + 1) * h, VehicleState(s, v), acc)
    return VehicleState(s, v)
