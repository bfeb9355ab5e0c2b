import csv

import pytest

from platoon_safe.cli import EXIT_CONFIG, EXIT_OK, EXIT_VIOLATION, main


def test_run_writes_outputs(tmp_path, capsys):
    code = main(["run", "--scenario", "scenario1", "--out", str(tmp_path), "--duration", "3", "--seed", "4"])
    assert code == EXIT_OK
    for name in ("steps.csv", "summary.csv", "channel_trace.csv"):
        assert (tmp_path / name).exists()
    assert "collisions: 0" in capsys.readouterr().out


def test_run_channel_overrides(tmp_path):
    code = main(["run", "--scenario", "scenario2", "--out", str(tmp_path), "--duration", "1", "--drop", "1",
                 "--delay", "1,2", "--no-safe-distance"])
    assert code == EXIT_OK
    rows = list(csv.DictReader(open(tmp_path / "channel_trace.csv")))
    assert rows and all(r["deliver_step"] == "DROPPED" for r in rows)


def test_run_collision_exit_code(tmp_path):
    assert main(["run", "--scenario", "collision", "--out", str(tmp_path)]) == EXIT_VIOLATION


def test_run_config_error_reports_line(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("schema_version: 1\nduration: 5\nvehicles:\n  - {id: a, preset: p0, s: 1, v: -3, x: 1}\n")
    assert main(["run", "--scenario", str(bad), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "line 4" in capsys.readouterr().err


def test_run_bad_duration(tmp_path):
    assert main(["run", "--scenario", "scenario1", "--out", str(tmp_path), "--duration", "0"]) == EXIT_CONFIG


def test_argument_errors_exit_nonzero():
    with pytest.raises(SystemExit):
        main(["run", "--scenario", "scenario1", "--drop", "1.5"])
    with pytest.raises(SystemExit):
        main(["fuzz", "--suite", "no-such-suite"])


def test_fuzz_pass_and_missing_suite(tmp_path, capsys):
    assert main(["fuzz", "--suite", "failsafe-minimality", "--iters", "5", "--out", str(tmp_path)]) == EXIT_OK
    assert "0 violations" in capsys.readouterr().out
    assert main(["fuzz"]) == EXIT_CONFIG
    assert main(["fuzz", "--suite", "monotonicity", "--iters", "0"]) == EXIT_CONFIG


def test_fuzz_fault_writes_replayable_reproducer(tmp_path, capsys):
    code = main(["fuzz", "--suite", "failsafe-minimality", "--iters", "20", "--seed", "3", "--inject-fault",
                 "--out", str(tmp_path)])
    assert code == EXIT_VIOLATION
    repro = list(tmp_path.glob("repro-*.yaml"))
    assert len(repro) == 1
    assert main(["fuzz", "--replay", str(repro[0])]) == EXIT_VIOLATION
    assert "violation reproduced" in capsys.readouterr().out


def test_fuzz_replay_missing_file(tmp_path):
    assert main(["fuzz", "--replay", str(tmp_path / "none.yaml")]) == EXIT_CONFIG
