"""
Agreeing on a braking limit over a lossy channel
================================================

Five vehicles with different brakes drive in a platoon. They agree on the weakest
member's braking capability so nobody needs a large gap to a vehicle that brakes
harder. Messages are dropped (5%) and delayed (up to two periods). After 10 s the
weakest truck leaves, the agreement restarts, and later the new leader brakes fully.
"""

import numpy as np

from platoon_safe.scenario import bundled
from platoon_safe.sim import run

scenario = bundled("scenario2")
logs, summary = run(scenario, log_safe_distance=False)

# enforced braking limit of every vehicle, once per second
ids = [v.vid for v in scenario.vehicles]
print("   t  " + "".join(f"{v:>8}" for v in ids))
by_t = {}
for r in logs:
    by_t.setdefault(round(r.t, 1), {})[r.vid] = r.a_min_forced
for t in np.arange(0.0, scenario.duration, 2.0):
    row = by_t.get(round(t, 1), {})
    print(f"{t:5.1f} " + "".join(f"{row[v]:8.2f}" if v in row else "        " for v in ids))

print(f"\nconverged at {summary.convergence_time:.1f} s, re-converged at {summary.reconvergence_time:.1f} s")
print("limit before the departure:", summary.limit_before_departure)
print("final limits:", {k: round(v, 2) for k, v in summary.final_limits.items()})
print("collisions:", summary.collisions, " invariant violations:", summary.invariant_violations)
