"""Shared value types: measurement intervals, vehicle/environment parameters, cut-in trackers."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    @classmethod
    def point(cls, x: float) -> "Interval":
        return cls(x, x)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def __contains__(self, x: float) -> bool:
        return self.lo <= x <= self.hi

    def __add__(self, other: "Interval | float") -> "Interval":
        if isinstance(other, Interval):
            return Interval(self.lo + other.lo, self.hi + other.hi)
        return Interval(self.lo + other, self.hi + other)

    __radd__ = __add__

    def __neg__(self) -> "Interval":
        return Interval(-self.hi, -self.lo)

    def __sub__(self, other: "Interval | float") -> "Interval":
        return self + (-other)

    def min(self, other: "Interval") -> "Interval":
        return Interval(min(self.lo, other.lo), min(self.hi, other.hi))

    def max(self, other: "Interval") -> "Interval":
        return Interval(max(self.lo, other.lo), max(self.hi, other.hi))

    def clip_lo(self, floor: float) -> "Interval":
        return Interval(max(self.lo, floor), max(self.hi, floor))


@dataclass(frozen=True)
class VehicleState:
    s: float  # front position [m]
    v: float  # [m/s]


@dataclass(frozen=True)
class StateInterval:
    """Measured state: intervals enclosing the true front position and velocity."""

    s: Interval
    v: Interval

    @classmethod
    def exact(cls, state: VehicleState) -> "StateInterval":
        return cls(Interval.point(state.s), Interval.point(state.v))

    def contains(self, state: VehicleState) -> bool:
        return state.s in self.s and state.v in self.v

    def shifted(self, ds: float) -> "StateInterval":
        return StateInterval(self.s + ds, self.v)


@dataclass(frozen=True)
class VehicleParams:
    a_dec: float  # brake/tire limit, negative [m/s^2]
    a_acc: float  # engine limit [m/s^2]
    v_max: float
    m: float  # [kg]
    c: float  # drag coefficient
    A: float  # frontal area [m^2]
    l: float  # length [m]

    def __post_init__(self):
        if not (self.a_dec < 0 and self.v_max > 0 and self.m > 0 and self.A > 0 and self.l > 0):
            raise ValueError(f"invalid vehicle parameters: {self}")

    def with_a_dec(self, a_dec: float) -> "VehicleParams":
        return replace(self, a_dec=a_dec)


@dataclass(frozen=True)
class EnvParams:
    rho: Interval = Interval(1.1, 1.3)
    v_wind: Interval = Interval(1.4, 4.2)
    alpha: Interval = Interval(-0.06, 0.06)
    g: float = 9.81
    w: Interval = Interval(-0.1, 0.1)
    s_sensor: float = 200.0
    t_C: float = 4.0
    a_dec_cutin: float = -1.0
    dt_p: float = 0.1

    def __post_init__(self):
        if not (self.w.lo <= 0 <= self.w.hi):
            raise ValueError("disturbance bounds must enclose 0")
        if not (self.t_C > 0 and self.dt_p > 0 and self.a_dec_cutin < 0):
            raise ValueError("t_C, dt_p must be positive and a_dec_cutin negative")


# Vehicle presets p0..p4 and the conservative column used for unknown vehicles.
# The worst-case column leaves a_acc, v_max and l unspecified; the values below only
# enter computations that never matter for a vehicle braking with input -inf, and the
# length cancels because predecessors are sensed by their rear position.
P0 = VehicleParams(a_dec=-5.0, a_acc=1.0, v_max=25.0, m=20000.0, c=0.7, A=7.0, l=16.0)
P1 = VehicleParams(a_dec=-6.0, a_acc=1.5, v_max=25.0, m=15000.0, c=0.5, A=8.0, l=14.0)
P2 = VehicleParams(a_dec=-10.0, a_acc=4.0, v_max=60.0, m=2500.0, c=0.25, A=1.7, l=4.9)
P3 = VehicleParams(a_dec=-5.5, a_acc=1.0, v_max=25.0, m=20000.0, c=0.6, A=6.0, l=16.0)
P4 = VehicleParams(a_dec=-9.0, a_acc=3.5, v_max=50.0, m=2000.0, c=0.35, A=2.4, l=4.2)
WORST_CASE = VehicleParams(a_dec=-12.0, a_acc=10.0, v_max=70.0, m=400.0, c=2.0, A=12.5, l=5.0)

PRESETS = {"p0": P0, "p1": P1, "p2": P2, "p3": P3, "p4": P4, "worst_case": WORST_CASE}


@dataclass
class CutinTracker:
    t_start: float
    a_min_observed: float
    cleared: bool = False

    @classmethod
    def start(cls, t: float, env: EnvParams) -> "CutinTracker":
        return cls(t_start=t, a_min_observed=env.a_dec_cutin)

    def remaining(self, t: float, t_C: float) -> float:
        if self.cleared:
            return 0.0
        return max(0.0, t_C - (t - self.t_start))


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def interval_measure(true_value: float, max_width: float, rng_seed=None) -> Interval:
    """Noisy measurement of ``true_value`` as an interval of width ``max_width``.

    The interval centre is Gaussian around the true value and clipped so the true value
    always stays inside. ``rng_seed`` may be an int or a ``numpy.random.Generator``.
    """
    if max_width < 0:
        raise ValueError("max_width must be >= 0")
    if max_width == 0:
        return Interval.point(true_value)
    rng = _as_rng(rng_seed)
    half = 0.5 * max_width
    offset = float(np.clip(rng.normal(0.0, half / 2.0), -half, half))
    centre = true_value + offset
    lo, hi = centre - half, centre + half
    # guard against rounding pushing the true value out
    return Interval(min(lo, true_value), max(hi, true_value))


def measure_state(state: VehicleState, width_s: float, width_v: float, rng) -> StateInterval:
    s = interval_measure(state.s, width_s, rng)
    v = interval_measure(state.v, width_v, rng).clip_lo(0.0)
    return StateInterval(s, v)


