"""
Finding the least harsh safe input
==================================

A truck at 20 m/s closes in on a slower car with much stronger brakes. The nominal controller wants to keep
accelerating; verification rejects that, and a bisection over the input finds the
mildest braking that is still verified safe. The search is anytime: every
intermediate answer is safe already.
"""

from platoon_safe.controllers import FailSafeConfig, fail_safe_iter, fail_safe_margin, nominal_cacc
from platoon_safe.dynamics import NEG_INF
from platoon_safe.types import P0, P2, EnvParams, Interval, StateInterval
from platoon_safe.verify import PrecedingInfo, verify

env = EnvParams()
ego = StateInterval(Interval(0.0, 0.4), Interval(20.0, 20.1))
# the car's rear is 41 m ahead of the truck's front
car = PrecedingInfo("car", StateInterval(Interval(46.3, 46.7), Interval(12.0, 12.1)), P2, P2.a_dec)

a_nom = nominal_cacc(ego, [car], target_speed=25.0, headway=0.3, params=P0)
check = verify(a_nom, P0.a_dec, [car], [], ego, P0, env)
print(f"nominal input {a_nom:+.3f} m/s^2 is {'safe' if check.safe else 'NOT safe'}")

# bisection: each yielded value is a safe input; the last one backs off a_tol from
# the first input found unsafe, so it is at most a_tol harsher than necessary
cfg = FailSafeConfig(a_tol=0.05)
for i, a in enumerate(fail_safe_iter(check.limit_sequence, ego, P0.a_dec, P0, env, cfg)):
    print(f"  iteration {i:2d}: best safe input so far {a:+.4f}")
print(f"margin at the answer: {fail_safe_margin(a, check.limit_sequence, ego, P0.a_dec, P0, env):.3f} m")

# if the car were stopped 5 m ahead, even full braking would not help
close = PrecedingInfo("car", StateInterval(Interval(10.3, 10.7), Interval(0.0, 0.1)), P2, P2.a_dec)
res = verify(NEG_INF, P0.a_dec, [close], [], ego, P0, env)
print("full braking behind a stopped car 5 m ahead is", "safe" if res.safe else "unsafe -> collision alert")
