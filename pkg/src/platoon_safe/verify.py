"""Online safety verification of a planned input against predecessors, alerts and sensor range."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .dynamics import NEG_INF, BoundTrajectory, lower_pos, upper_pos
from .types import CutinTracker, EnvParams, StateInterval, VehicleParams


@dataclass(frozen=True)
class PrecedingInfo:
    """What the ego knows about one vehicle ahead.

    ``state`` encloses the predecessor's FRONT position (measured rear plus the assumed
    length) and velocity. ``now`` is the planning time, needed for the remaining clearing
    time of an active cut-in.
    """

    vehicle_id: object
    state: StateInterval
    params: VehicleParams
    a_min_assumed: float
    cutin: Optional[CutinTracker] = None
    now: float = 0.0

    def cutin_window(self, env: EnvParams) -> Optional[tuple[float, float]]:
        if self.cutin is None:
            return None
        remaining = self.cutin.remaining(self.now, env.t_C)
        if remaining <= 0:
            return None
        return (self.cutin.a_min_observed, remaining)

    def without_cutin(self) -> "PrecedingInfo":
        return replace(self, cutin=None)


@dataclass(frozen=True)
class VerifyResult:
    safe: bool
    limit_sequence: np.ndarray  # positions the ego front must not exceed; constant past the end
    ego_upper: BoundTrajectory

    def __bool__(self) -> bool:
        return self.safe


def predecessor_lower(pred: PrecedingInfo, env: EnvParams, a_min: Optional[float] = None) -> BoundTrajectory:
    a = pred.a_min_assumed if a_min is None else a_min
    return lower_pos(pred.state, [NEG_INF], a, pred.params, env, cutin=pred.cutin_window(env))


def limit_sequence(pred_lowers: Sequence[BoundTrajectory], fixed: Iterable[float], n: int) -> np.ndarray:
    seq = np.full(n, np.inf)
    for fx in fixed:
        np.minimum(seq, fx, out=seq)
    for low in pred_lowers:
        np.minimum(seq, low.padded(n), out=seq)
    return seq


def first_violation(ego_upper: np.ndarray, limits: np.ndarray) -> Optional[int]:
    """Smallest k with ego_upper[k+1] >= limits[k], both padded with their last value."""
    n = max(len(ego_upper), len(limits) + 1)
    up = _pad(ego_upper, n)
    lim = _pad(limits, n - 1)
    bad = np.nonzero(up[1:] >= lim)[0]
    return int(bad[0]) if bad.size else None


def margin(ego_upper: np.ndarray, limits: np.ndarray) -> float:
    """min_k limits[k] - ego_upper[k+1]; positive iff safe."""
    n = max(len(ego_upper), len(limits) + 1)
    return float(np.min(_pad(limits, n - 1) - _pad(ego_upper, n)[1:]))


def _pad(a: np.ndarray, n: int) -> np.ndarray:
    if len(a) >= n:
        return a[:n]
    return np.concatenate([a, np.full(n - len(a), a[-1])])


def verify(a_d: float, a_min_ego: float, preceding: Sequence[PrecedingInfo], coll_positions: Iterable[float],
           ego_meas: StateInterval, params: VehicleParams, env: EnvParams, *, include_sensor: bool = True,
           pred_lowers: Optional[Sequence[BoundTrajectory]] = None) -> VerifyResult:
    """Check that applying ``a_d`` for one planning period, then braking fully, is safe.

    ``pred_lowers`` may carry precomputed predecessor bounds (same order as
    ``preceding``) to avoid recomputation.
    """
    if not a_min_ego < 0:
        raise ValueError("a_min_ego must be negative")
    ego_up = upper_pos(ego_meas, [a_d, NEG_INF], a_min_ego, params, env)
    if pred_lowers is None:
        pred_lowers = [predecessor_lower(p, env) for p in preceding]
    fixed = list(coll_positions)
    if include_sensor:
        fixed.append(ego_meas.s.lo + env.s_sensor)
    n = max([len(ego_up)] + [len(p) for p in pred_lowers]) + 1
    seq = limit_sequence(pred_lowers, fixed, n)
    safe = first_violation(ego_up.positions, seq) is None
    return VerifyResult(safe, seq, ego_up)


def stop_behind(ego_meas: StateInterval, position: float, a_min_ego: float, params: VehicleParams,
                env: EnvParams) -> bool:
    return verify(NEG_INF, a_min_ego, [], [position], ego_meas, params, env, include_sensor=False).safe


def safe_distance(ego_meas: StateInterval, pred: PrecedingInfo, a_min_ego: float, params: VehicleParams,
                  env: EnvParams) -> float:
    """Infimum of the gap (predecessor rear lower bound minus ego front upper bound) for
    which full braking of the ego is verified safe w.r.t. ``pred``.

    The bound dynamics do not depend on position, so shifting the predecessor shifts its
    lower-bound sequence rigidly and the infimum is a maximum over grid points.
    """
    ego_up = upper_pos(ego_meas, [NEG_INF], a_min_ego, params, env).positions
    low = predecessor_lower(pred, env).positions
    n = max(len(ego_up), len(low) + 1)
    e = _pad(ego_up, n) - ego_up[0]
    d = _pad(low, n - 1) - low[0]
    return max(0.0, float(np.max(e[1:] - d)))
