"""
Cut-ins and unavoidable collisions
==================================

First, a car cuts in 7 m ahead of a truck. The truck assumes the car brakes gently
for a few seconds and plans a smooth braking ramp to re-open the gap.

Second, an obstacle appears 8 m in front of a car at 25 m/s. No input is safe, so the
car brakes fully and warns its follower with a collision alert.
"""

from platoon_safe.scenario import bundled
from platoon_safe.sim import run

logs, summary = run(bundled("cutin"), log_safe_distance=False)
v3 = [r for r in logs if r.vid == "v3"]
recap_steps = [r for r in v3 if r.recap]
print(f"cut-in: {len(recap_steps)} periods of recapture planning, collisions: {summary.collisions}")
for r in recap_steps[::5]:
    print(f"  t={r.t:5.1f}  a={r.a_applied:+.2f} m/s^2  v={r.v:5.2f} m/s")
gap = min(g for pair, g in summary.min_gaps.items() if pair.endswith("v3"))
print("  smallest gap behind the intruder:", round(gap, 2), "m")

logs, summary = run(bundled("collision"), log_safe_distance=False)
print(f"\nobstacle: collisions {summary.collisions} (first at step {summary.first_collision_step}), "
      f"alerts sent {summary.alerts_sent}")
# the follower keeps cruising until the alerted crash position forces it to brake
for r in logs:
    if r.vid == "v2" and round(r.t * 10) % 10 == 0:
        print(f"  v2 t={r.t:3.0f}  v={r.v:5.2f} m/s  a={r.a_applied:+.2f} m/s^2  fail-safe={r.fail_safe}")
print("  v2 stops", round(summary.min_gaps["v1->v2"], 2), "m behind the crashed car")
