"""Acceptance criteria, each run at its stated scale and tolerance.

Every test records one PASS/FAIL line, printed in the pytest terminal summary (and
to stdout when this file is executed directly).
"""
import dataclasses
import filecmp

import numpy as np
import pytest

from platoon_safe import fuzz
from platoon_safe.scenario import bundled
from platoon_safe.sim import FullBrake, Depart, run, write_steps_csv

N_SEEDED_RUNS = 100


def test_1_monotonicity(acceptance_report):
    rep = fuzz.run_suite("monotonicity", 500, seed=1)
    ok = rep.ok and rep.elapsed < 60
    acceptance_report(1, "monotonicity", ok,
                      f"500 trials, {len(rep.violations)} violations, {rep.elapsed:.1f} s (< 60 s)")
    assert ok


def test_2_verify_soundness(acceptance_report):
    rep = fuzz.run_suite("verify-soundness", 200, seed=2)
    ok = rep.ok and rep.elapsed < 300
    acceptance_report(2, "verify soundness", ok,
                      f"200 safe cases x 200 rollouts, {len(rep.violations)} overlaps, {rep.elapsed:.1f} s (< 300 s)")
    assert ok


def test_3_failsafe_minimality(acceptance_report):
    rep = fuzz.run_suite("failsafe-minimality", 1000, seed=3)
    acceptance_report(3, "fail-safe minimality", rep.ok,
                      f"1000 cases, a_tol 0.05, {len(rep.violations)} violations")
    assert rep.ok, rep.violations[:3]


def test_4_consensus_invariance(acceptance_report):
    rep = fuzz.run_suite("consensus-invariance", 100, seed=4, drop=0.3, delay=(0, 10))
    steps = 100 * fuzz.CONSENSUS_STEPS_PER_CASE
    acceptance_report(4, "consensus invariance", rep.ok,
                      f"{steps} protocol rounds (30% drop, 0-10 step delay), {len(rep.violations)} violations")
    assert rep.ok, rep.violations[:3]


def test_5_scenario1(acceptance_report):
    base = bundled("scenario1")
    collisions = violations = checks = 0
    inputs = []
    for seed in range(N_SEEDED_RUNS):
        _, s = run(dataclasses.replace(base, seed=seed), log_safe_distance=False)
        collisions += s.collisions
        violations += s.safe_distance_violations
        checks += s.safe_distance_checks
        inputs += s.fail_safe_inputs
    median = float(np.median(inputs)) if inputs else float("nan")
    ok = collisions == 0 and violations == 0 and median > -1.0
    acceptance_report(5, "scenario 1", ok,
                      f"{N_SEEDED_RUNS} runs, {collisions} collisions, {violations}/{checks} safe-distance "
                      f"violations, median fail-safe input {median:.3f} (> -1) over {len(inputs)} engagements")
    assert ok


def test_6_scenario2(acceptance_report):
    base = bundled("scenario2")
    collisions = 0
    bad_spread = bad_target = inv = 0
    worst_spread = 0.0
    for seed in range(N_SEEDED_RUNS):
        _, s = run(dataclasses.replace(base, seed=seed), log_safe_distance=False, check_safe_distance=False)
        collisions += s.collisions
        inv += s.invariant_violations
        spread = s.spread_before_departure
        worst_spread = max(worst_spread, spread if spread is not None else np.inf)
        if spread is None or not spread < 0.01:
            bad_spread += 1
        finals = list(s.final_limits.values())
        if s.limit_before_departure is None or not max(finals) < s.limit_before_departure:
            bad_target += 1
    ok = collisions == 0 and bad_spread == 0 and bad_target == 0 and inv == 0
    acceptance_report(6, "scenario 2", ok,
                      f"{N_SEEDED_RUNS} runs, {collisions} collisions, worst pre-departure spread "
                      f"{worst_spread:.2g} (< 0.01), {bad_target} runs without a stronger post-departure limit, "
                      f"{inv} invariant violations")
    assert ok


def test_7_performance(acceptance_report):
    sc = bundled("scenario2")
    sc = dataclasses.replace(sc, events=[e for e in sc.events if not isinstance(e, (FullBrake, Depart))],
                             duration=100.0)
    run(dataclasses.replace(sc, duration=1.0))  # load compiled kernels
    _, s = run(sc)
    per_vehicle = float(np.percentile(s.vehicle_plan_times, 99)) * 1e3
    per_tick = float(np.percentile(s.plan_times, 99)) * 1e3
    ok = len(s.plan_times) == 1000 and per_vehicle < 80
    acceptance_report(7, "performance", ok,
                      f"5 vehicles, {len(s.plan_times)} steps, p99 planning step {per_vehicle:.2f} ms (< 80 ms); "
                      f"p99 of all five per tick {per_tick:.2f} ms")
    assert ok


def test_8_determinism(acceptance_report, tmp_path):
    sc = dataclasses.replace(bundled("scenario2"), seed=8)
    paths = []
    for i in range(2):
        logs, _ = run(sc)
        p = tmp_path / f"steps{i}.csv"
        write_steps_csv(logs, p)
        paths.append(p)
    ok = filecmp.cmp(paths[0], paths[1], shallow=False) and paths[0].stat().st_size > 0
    acceptance_report(8, "determinism", ok, f"two runs, steps.csv byte-identical: {ok}")
    assert ok


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q", "-s"]))
