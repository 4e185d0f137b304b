import csv
import json
import locale

import pytest

from edflow.cli import EXIT_RUNTIME, fmt_min, fmt_p, main
from edflow.config import default_config, parse_config

FAST = "replication:\n  horizon: 1440\n  warmup: 720\n  drain: 1440\n"


@pytest.fixture()
def cfg_file(tmp_path):
    p = tmp_path / "fast.yaml"
    p.write_text(FAST)
    return p


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def run(*argv):
    return main([str(a) for a in argv])


def test_validate_table(tmp_path, cfg_file):
    assert run("validate", "--config", cfg_file, "--reps", 2, "--out", tmp_path) == 0
    table = rows(tmp_path / "table4.csv")
    assert table[0] == ["esi", "actual_min", "simulated_min", "ci_half_width", "percent_diff"]
    assert [r[0] for r in table[1:]] == ["1", "2", "3", "4", "5"]
    assert [r[1] for r in table[1:]] == ["149.0", "261.0", "228.0", "106.0", "122.0"]
    for r in table[1:]:
        actual, sim = float(r[1]), float(r[2])
        assert int(r[4]) == round(100 * abs(float(r[2]) - actual) / actual) or abs(
            int(r[4]) - 100 * abs(sim - actual) / actual
        ) <= 0.51


def test_validate_byte_identical(tmp_path, cfg_file):
    outs = []
    for name in ("a", "b"):
        assert run("validate", "--config", cfg_file, "--reps", 2, "--seed", 5, "--out", tmp_path / name) == 0
        outs.append((tmp_path / name / "table4.csv").read_bytes())
    assert outs[0] == outs[1]


def test_seed_flag_changes_output(tmp_path, cfg_file):
    for seed in (1, 2):
        run("validate", "--config", cfg_file, "--reps", 2, "--seed", seed, "--out", tmp_path / str(seed))
    assert (tmp_path / "1" / "table4.csv").read_bytes() != (tmp_path / "2" / "table4.csv").read_bytes()


def test_sweep_delays_tables(tmp_path, cfg_file):
    assert run("sweep-delays", "--config", cfg_file, "--reps", 2, "--levels", 0, 1, "--out", tmp_path) == 0
    t5 = rows(tmp_path / "table5.csv")
    t6 = rows(tmp_path / "table6.csv")
    assert t5[0] == t6[0] == ["level", "dimension", "pct_reduction", "reduction_min", "p_value"]
    assert [(r[0], r[1]) for r in t5[1:]] == [("0", "otb"), ("1", "otb"), ("0", "etr"), ("1", "etr")]
    zero = [r for r in t5[1:] + t6[1:] if r[0] == "0"]
    assert all(r[2] == "0.0" and r[3] == "0.0" and r[4] == "1.0000" for r in zero)
    assert float(t6[2][2]) > 0


def test_sweep_single_dimension(tmp_path, cfg_file):
    run("sweep-delays", "--config", cfg_file, "--reps", 2, "--levels", 0.5, "--dimension", "etr", "--out", tmp_path)
    assert (tmp_path / "table5.csv").exists() and not (tmp_path / "table6.csv").exists()


def test_sweep_bundling_table(tmp_path, cfg_file):
    assert run("sweep-bundling", "--config", cfg_file, "--reps", 2, "--scenarios", "baseline", "S8", "--out", tmp_path) == 0
    t7 = rows(tmp_path / "table7.csv")
    assert t7[0] == ["scenario", "pct_change", "p_value", "significant"]
    assert t7[1] == ["baseline", "0.0", "1.0000", "false"]
    assert t7[2][0] == "S8" and float(t7[2][1]) < 0


def test_unknown_scenario_exit_code(tmp_path, cfg_file, capsys):
    code = run("sweep-bundling", "--config", cfg_file, "--reps", 2, "--scenarios", "S42", "--out", tmp_path)
    assert code == 4
    assert "S42" in capsys.readouterr().err


def test_parse_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("imaging: [1, 2\n")
    assert run("validate", "--config", bad, "--out", tmp_path) == 3


def test_validation_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("triage: [15, 17, 16]\n")
    assert run("validate", "--config", bad, "--out", tmp_path) == 4
    assert "triage" in capsys.readouterr().err


def test_runtime_error_exit_code(tmp_path):
    cfg = tmp_path / "empty.yaml"
    # a horizon with no measured patients cannot be summarized
    cfg.write_text("replication:\n  horizon: 0.001\n  warmup: 0\n  drain: 0\n")
    assert run("run", "--config", cfg, "--reps", 2, "--out", tmp_path) == EXIT_RUNTIME


def test_exit_codes_distinct():
    from edflow.config import ParseError, ValidationError

    assert len({0, ParseError.exit_code, ValidationError.exit_code, EXIT_RUNTIME}) == 4


def test_print_defaults_round_trip(capsys):
    assert run("print-defaults") == 0
    assert parse_config(capsys.readouterr().out) == default_config()


def test_run_with_event_log(tmp_path, cfg_file):
    log = tmp_path / "events.jsonl"
    assert run("run", "--config", cfg_file, "--reps", 2, "--event-log", log, "--out", tmp_path) == 0
    lines = log.read_text().splitlines()
    events = [json.loads(x) for x in lines]
    assert {"time", "sequence", "kind", "subject"} <= set(events[0])
    assert [e["time"] for e in events] == sorted(e["time"] for e in events)
    assert "arrival" in {e["kind"] for e in events}
    out = rows(tmp_path / "run.csv")
    assert out[0] == ["esi", "mean_min", "ci_half_width"] and out[-1][0] == "all"


def test_formatting_ignores_locale():
    try:
        locale.setlocale(locale.LC_NUMERIC, "de_DE.UTF-8")
    except locale.Error:
        pass
    try:
        assert fmt_min(1234.56) == "1234.6"
        assert fmt_min(-0.0) == fmt_min(-0.04) == "0.0"
        assert fmt_p(0.03) == "0.0300"
    finally:
        locale.setlocale(locale.LC_NUMERIC, "C")
