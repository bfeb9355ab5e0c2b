import numpy as np
import pytest

from platoon_safe import fuzz


@pytest.mark.parametrize("suite", sorted(fuzz.SUITES))
def test_suites_pass_small_runs(suite):
    report = fuzz.run_suite(suite, 3, seed=11, threads=1)
    assert report.ok and not report.violations


def test_cases_are_reproducible_from_seed_and_index():
    a = fuzz.failsafe_make_case(fuzz.case_rng(5, 2))
    b = fuzz.failsafe_make_case(fuzz.case_rng(5, 2))
    assert fuzz._plain(a) == fuzz._plain(b)


def test_rollout_batch_matches_constant_braking_without_drag():
    from platoon_safe.types import EnvParams, Interval, VehicleParams
    p = VehicleParams(a_dec=-6.0, a_acc=2.0, v_max=30.0, m=1000.0, c=0.0, A=1.0, l=5.0)
    env = EnvParams(alpha=Interval(0, 0), w=Interval(0, 0))
    n = 40
    s = fuzz.rollout_batch(np.array([0.0]), np.array([12.0]), np.full((1, n), -np.inf), np.zeros((1, n)), p,
                           p.a_dec, np.array([1.2]), np.array([0.0]), [], env)
    assert s.shape == (1, n * 10 + 1)
    assert s[0, -1] == pytest.approx(12.0 ** 2 / 12.0, abs=1e-6)


def test_reproducer_round_trip(tmp_path):
    report = fuzz.run_suite("failsafe-minimality", 20, seed=3, fault=True, threads=1)
    assert not report.ok
    path = tmp_path / "r.yaml"
    fuzz.dump_reproducer(report, report.violations[0], True, path)
    assert fuzz.replay(path) is not None
