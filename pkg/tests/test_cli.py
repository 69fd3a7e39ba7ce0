import json
import math
import pathlib
import subprocess
import sys

import pytest

from npeg.cli import (
    EXIT_CONFIG,
    EXIT_IO,
    EXIT_NUMERIC,
    EXIT_OK,
    JSON_KEYS,
    ConfigError,
    main,
    parse_config,
    read_csv,
    record_from_json,
    record_to_csv,
    record_to_json,
    run,
)

EXAMPLES = pathlib.Path(__file__).resolve().parent.parent / "docs" / "examples"
VALID = sorted(EXAMPLES.glob("*.cfg"))
INVALID = sorted((EXAMPLES / "invalid").glob("*.cfg"))


def test_simulate_flags_derive_ratio():
    cfg = parse_config(["simulate", "--n", "4", "--u", "1.0", "--j", "0.05", "--delta0", "0",
                        "--model", "effective"])
    assert cfg.n_bosons == 4 and cfg.d_ratio == pytest.approx(20.0)
    assert cfg.options["model"] == "effective"


def test_zero_bosons_rejected():
    with pytest.raises(ConfigError, match="n_bosons must be ≥ 1"):
        parse_config(["simulate", "--n", "0"])


def test_flags_override_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("n = 2\nd = 10  # comment\n")
    cfg = parse_config(["scaling", "--config", str(path), "--n", "4"])
    assert cfg.n_bosons == 4 and cfg.d_ratio == pytest.approx(10.0)
    assert parse_config(["scaling"], config_text="n = 2").n_bosons == 2
    assert parse_config(["scaling"]).n_bosons == 4


def test_subcommand_from_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("subcommand = time-cost\nn = 3\n")
    assert parse_config(["--config", str(path)]).subcommand == "time-cost"
    with pytest.raises(ConfigError, match="not 'scaling'"):
        parse_config(["scaling", "--config", str(path)])


@pytest.mark.parametrize("argv, message", [
    (["simulate", "--hbar", "1"], "unrecognized arguments"),
    (["simulate", "--u", "abc"], "u: malformed number"),
    (["fisher-map", "--gamma-range", "1", "1", "5"], "start and stop must differ"),
    (["fisher-map", "--gamma-range", "0", "1", "1"], "count must be ≥ 2"),
    (["simulate", "--u", "1", "--j", "0.1", "--d", "20"], "d: inconsistent"),
    (["simulate", "--theta", "4"], "theta"),
    (["robustness", "--theta-over-pi", "0"], "theta-over-pi"),
    (["scaling", "--n-max", "13"], "n-max"),
    (["simulate", "--format", "xml"], "format"),
])
def test_config_errors_name_the_key(argv, message):
    with pytest.raises(ConfigError, match=message):
        parse_config(argv)


@pytest.mark.parametrize("path", VALID, ids=lambda p: p.name)
def test_documented_examples_parse_and_run(path):
    cfg = parse_config(["--config", str(path)])
    assert cfg.subcommand.replace("-", "_") in path.stem
    record = run(cfg)
    assert len(record.scan) >= 1


@pytest.mark.parametrize("path", INVALID, ids=lambda p: p.name)
def test_documented_negative_examples_fail(path, capsys):
    first = path.read_text().splitlines()[0]
    assert first.startswith("# expect:")
    expected = first.split(":", 1)[1].strip()
    with pytest.raises(ConfigError) as info:
        cfg = parse_config(["--config", str(path)])
        run(cfg)
    assert expected in str(info.value)
    assert main(["--config", str(path)]) == EXIT_CONFIG
    assert expected in capsys.readouterr().err


def test_examples_exist():
    assert len(VALID) >= 7 and len(INVALID) >= 5


def test_scaling_run():
    rec = run(parse_config(["scaling", "--n-min", "1", "--n-max", "6", "--d", "20", "--u", "1"]))
    assert rec.scan.columns == ("N", "J_eff", "F_c_opt", "delta_delta0")
    assert len(rec.scan) == 6
    assert rec.scan.column("delta_delta0")[3] == pytest.approx(1 / 960000, rel=1e-12)


def test_time_cost_run():
    rec = run(parse_config(["time-cost", "--n", "4", "--d", "20"]))
    assert rec.scan.column("ratio")[0] == pytest.approx(2.0833e-5, rel=1e-4)


def test_compare_single_boson_run():
    rec = run(parse_config(["compare", "--n", "1", "--d", "20"]))
    assert max(rec.scan.column("f_c_rel_dev")) < 1e-8
    assert max(rec.scan.column("f_q_rel_dev")) < 1e-8


def test_csv_round_trip_is_bit_exact():
    rec = run(parse_config(["fisher-map", "--gamma-range", "-3", "3", "7", "--omega-t-range", "0.1", "6", "9"]))
    text = record_to_csv(rec)
    columns, rows = read_csv(text)
    assert columns == rec.scan.columns
    assert rows == rec.scan.rows
    assert text.splitlines()[0] == ",".join(rec.scan.columns)


def test_json_schema_and_round_trip():
    rec = run(parse_config(["simulate", "--model", "full", "--n", "3", "--times", "0", "100", "11"]))
    payload = json.loads(record_to_json(rec))
    assert tuple(payload) == JSON_KEYS
    assert payload["schema_version"] == 1
    assert set(payload["provenance"]["timing"]) == {"timestamp", "wall_clock_seconds"}
    back = record_from_json(record_to_json(rec))
    assert back.config == rec.config
    assert back.scan == rec.scan
    assert back.wall_clock_seconds == rec.wall_clock_seconds and back.timestamp == rec.timestamp


def test_runs_are_deterministic():
    argv = ["compensation-scan", "--n-values", "2", "3", "4"]
    a, b = run(parse_config(argv)), run(parse_config(argv))
    assert record_to_csv(a) == record_to_csv(b)
    assert record_to_json(a, include_timing=False) == record_to_json(b, include_timing=False)


def test_exit_code_for_unresolved_derivative(capsys):
    code = main(["compare", "--n", "2", "--gamma-range", "0.5", "1", "2", "--richardson-tol", "1e-30",
                 "--fd-step", "1e-2"])
    assert code == EXIT_NUMERIC
    assert "compare:" in capsys.readouterr().err


def test_exit_code_for_unwritable_output(tmp_path, capsys):
    target = tmp_path / "missing" / "out.csv"
    assert main(["time-cost", "--output", str(target)]) == EXIT_IO
    assert "cannot write" in capsys.readouterr().err


def test_output_file_and_json_format(tmp_path):
    target = tmp_path / "out.json"
    assert main(["time-cost", "--n", "2", "--d", "10", "--format", "json", "--output", str(target)]) == EXIT_OK
    data = json.loads(target.read_text())
    assert data["rows"][0][2] == pytest.approx(0.1, rel=1e-15)


def test_thread_setting(monkeypatch):
    argv = ["compare", "--n", "2", "--gamma-range", "-1", "1", "5"]
    serial = record_to_csv(run(parse_config(argv)))
    monkeypatch.setenv("NPEG_THREADS", "3")
    assert record_to_csv(run(parse_config(argv))) == serial
    monkeypatch.setenv("NPEG_THREADS", "zero")
    with pytest.raises(ConfigError, match="NPEG_THREADS"):
        run(parse_config(argv))


def test_simulate_effective_columns():
    rec = run(parse_config(["simulate"]))
    assert rec.scan.columns == ("t", "omega_t", "p_up", "p_down", "bloch_x", "bloch_y", "bloch_z")
    assert len(rec.scan) == 400
    assert rec.scan.column("omega_t")[-1] == pytest.approx(2 * math.pi)


def test_console_script_entry_point():
    out = subprocess.run([sys.executable, "-m", "npeg.cli", "time-cost", "--n", "1"],
                         capture_output=True, text=True, check=True)
    columns, rows = read_csv(out.stdout)
    assert rows[0][columns.index("ratio")] == 1.0
