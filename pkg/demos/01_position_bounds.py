"""
Guaranteed position bounds under uncertainty
============================================

A truck at 22 m/s brakes fully. Its measured state, the air density, the wind, the
road incline and a disturbance are only known up to intervals. We compute the lower
and upper position bounds and check them against a few hundred sampled rollouts.
"""

import numpy as np

from platoon_safe import fuzz
from platoon_safe.dynamics import NEG_INF, lower_pos, upper_pos
from platoon_safe.types import P0, EnvParams, Interval, StateInterval

env = EnvParams()
meas = StateInterval(Interval(0.0, 0.4), Interval(21.9, 22.0))

# lower bound on the rear, upper bound on the front
low = lower_pos(meas, [NEG_INF], P0.a_dec, P0, env)
up = upper_pos(meas, [NEG_INF], P0.a_dec, P0, env)
print(f"rear stops no earlier than {low.final:7.2f} m  (after {low.stopped_at} periods)")
print(f"front stops no later than  {up.final:7.2f} m  (after {up.stopped_at} periods)")

# sample true rollouts: state inside the measurement, environment inside its bounds
rng = np.random.default_rng(0)
R, n = 400, max(len(low), len(up)) + 5
s0 = rng.uniform(meas.s.lo, meas.s.hi, R)
v0 = rng.uniform(meas.v.lo, meas.v.hi, R)
w = rng.uniform(env.w.lo, env.w.hi, (R, n))
rho = rng.uniform(env.rho.lo, env.rho.hi, R)
vw = rng.uniform(env.v_wind.lo, env.v_wind.hi, R)
incline = [[0.0, float(rng.uniform(-0.06, 0.06))], [400.0, float(rng.uniform(-0.06, 0.06))]]
front = fuzz.rollout_batch(s0, v0, np.full((R, n), NEG_INF), w, P0, P0.a_dec, rho, vw, incline, env)[:, ::10]

# every sampled front sits between the bounds at every planning period
lo_pad = low.padded(n + 1) + P0.l
up_pad = up.padded(n + 1)
print("max front - upper bound:", float(np.max(front - up_pad)))
print("min front - lower bound:", float(np.min(front - lo_pad)))

# the bound width is the price of not knowing the state and environment exactly
print("final width of the enclosure:", round(up.final - low.final - P0.l, 2), "m")
