"""Command line: ``platoon-safe run`` simulates a scenario, ``platoon-safe fuzz`` runs a property suite.

Exit codes: 0 success, 1 configuration error, 2 collision or property violation.
"""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import fuzz
from .network import ChannelConfig
from .scenario import BUNDLED, ScenarioError, load_scenario
from .sim import run_world, write_steps_csv, write_summary_csv

EXIT_OK, EXIT_CONFIG, EXIT_VIOLATION = 0, 1, 2


class ConfigError(Exception):
    pass


def _delay(text: str) -> tuple[int, int]:
    try:
        parts = [int(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected N or LO,HI steps, got {text!r}") from None
    if len(parts) == 1:
        parts *= 2
    if len(parts) != 2 or not 0 <= parts[0] <= parts[1]:
        raise argparse.ArgumentTypeError(f"invalid delay {text!r}")
    return parts[0], parts[1]


def _prob(text: str) -> float:
    try:
        x = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a probability, got {text!r}") from None
    if not 0.0 <= x <= 1.0:
        raise argparse.ArgumentTypeError("probability must lie in [0, 1]")
    return x


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="platoon-safe", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a scenario and write steps/summary/channel-trace CSVs")
    r.add_argument("--scenario", required=True,
                   help=f"scenario YAML file or bundled name ({', '.join(BUNDLED)})")
    r.add_argument("--out", default="out", help="output directory (default: ./out)")
    r.add_argument("--seed", type=int, help="override the scenario seed")
    r.add_argument("--duration", type=float, help="override the duration [s]")
    r.add_argument("--drop", type=_prob, help="override the message drop probability")
    r.add_argument("--delay", type=_delay, help="override the message delay in steps: N or LO,HI")
    r.add_argument("--no-safe-distance", action="store_true", help="skip safe-distance logging (faster)")

    f = sub.add_parser("fuzz", help="run a randomized property suite")
    f.add_argument("--suite", choices=sorted(fuzz.SUITES), help="property suite")
    f.add_argument("--iters", type=int, default=100,
                   help="number of cases; protocol steps for consensus-invariance")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--drop", type=_prob, default=0.3, help="drop probability (consensus-invariance)")
    f.add_argument("--delay", type=_delay, default=(0, 10), help="delay steps (consensus-invariance)")
    f.add_argument("--out", default=".", help="directory for reproducer files")
    f.add_argument("--replay", metavar="FILE", help="re-run a reproducer file instead of a suite")
    f.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    return ap


def cmd_run(args) -> int:
    try:
        sc = load_scenario(args.scenario)
    except ScenarioError as e:
        print(f"error: {args.scenario}: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        sc.seed = args.seed
    if args.duration is not None:
        if not args.duration > 0:
            print("error: --duration must be positive", file=sys.stderr)
            return EXIT_CONFIG
        sc.duration = args.duration
    if args.drop is not None or args.delay is not None:
        ch = sc.channel
        sc.channel = ChannelConfig(ch.drop_prob if args.drop is None else args.drop,
                                   ch.delay_steps if args.delay is None else args.delay, ch.duplicate_prob, ch.seed)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        print(f"error: cannot create {out}: {e}", file=sys.stderr)
        return EXIT_CONFIG
    world = run_world(sc, log_safe_distance=not args.no_safe_distance)
    s = world.summary
    write_steps_csv(world.logs, out / "steps.csv")
    write_summary_csv(s, out / "summary.csv")
    world.channel.write_trace(out / "channel_trace.csv")

    print(f"scenario {sc.name} seed {sc.seed}: {s.steps} steps")
    print(f"  collisions: {s.collisions}" + (f" (first at step {s.first_collision_step}: "
                                            f"{', '.join(s.collision_pairs)})" if s.collisions else ""))
    for pair, g in s.min_gaps.items():
        print(f"  min gap {pair}: {g:.3f} m")
    if s.convergence_time is not None:
        print(f"  consensus converged at t={s.convergence_time:.1f} s")
    if s.reconvergence_time is not None:
        print(f"  consensus re-converged at t={s.reconvergence_time:.1f} s")
    if s.fail_safe_inputs:
        print(f"  fail-safe engaged {len(s.fail_safe_inputs)} times, median input "
              f"{float(np.median(s.fail_safe_inputs)):.3f} m/s^2")
    if s.alerts_sent:
        print(f"  collision alerts sent: {s.alerts_sent}")
    if s.invariant_violations:
        print(f"  braking-limit invariant violations: {s.invariant_violations}")
    print(f"  wrote {out}/steps.csv, summary.csv, channel_trace.csv")
    return EXIT_VIOLATION if (s.collisions or s.invariant_violations) else EXIT_OK


def cmd_fuzz(args) -> int:
    if args.replay:
        try:
            msg = fuzz.replay(args.replay)
        except (OSError, ValueError, KeyError) as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_CONFIG
        if msg is None:
            print("reproducer no longer fails")
            return EXIT_OK
        print(f"violation reproduced: {msg}")
        return EXIT_VIOLATION
    if args.suite is None:
        print("error: --suite is required unless --replay is given", file=sys.stderr)
        return EXIT_CONFIG
    if args.iters < 1:
        print("error: --iters must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    kw = {}
    cases = args.iters
    if args.suite == "consensus-invariance":
        kw = {"drop": args.drop, "delay": args.delay}
        cases = max(1, math.ceil(args.iters / fuzz.CONSENSUS_STEPS_PER_CASE))
    report = fuzz.run_suite(args.suite, cases, seed=args.seed, fault=args.inject_fault, **kw)
    unit = f"{cases} schedules x {fuzz.CONSENSUS_STEPS_PER_CASE} steps" if kw else f"{cases} cases"
    print(f"{args.suite}: {unit}, {len(report.violations)} violations, {report.elapsed:.1f} s")
    if report.ok:
        return EXIT_OK
    first = report.violations[0]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"repro-{args.suite}-{args.seed}-{first.index}.yaml"
    fuzz.dump_reproducer(report, first, args.inject_fault, path)
    print(f"  case {first.index}: {first.message}")
    print(f"  reproducer: {path}")
    return EXIT_VIOLATION


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args)
    return cmd_fuzz(args)


if __name__ == "__main__":
    sys.exit(main())
