import csv
import subprocess
import sys

import numpy as np
import pytest
import yaml

from cyclonesim import cli, dae
from cyclonesim.report import (DEFAULT_TOLERANCE, compare_report, load_reference, parse_tolerance,
                               steady_summary, timeseries_columns, write_timeseries)
from cyclonesim.scenario import dump_scenario

FAILING_SOLVER = "solver:\n  max_newton: 1\n  dt_min: 0.009 s\n"


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


@pytest.fixture(scope="module")
def short_run(systems):
    s = systems["cy2"]
    return s, dae.simulate(s, 30.0, np.arange(0.0, 30.5, 1.0))


def test_timeseries_csv(short_run, tmp_path):
    s, res = short_run
    path = tmp_path / "ts.csv"
    write_timeseries(s, res, path)
    header, rows = read_csv(path)
    assert header == timeseries_columns(s)
    assert len(header) == 5 + s.ns + s.ng + 3 + 8
    t = np.array([float(r[0]) for r in rows])
    assert np.all(np.diff(t) > 0)
    # 17 significant digits reproduce the doubles exactly
    P = np.array([float(r[1]) for r in rows])
    assert np.array_equal(P, res.y[:, 3])
    assert np.array_equal(np.array([float(r[2]) for r in rows]), res.y[:, 0])


def test_reference_tables():
    ref = load_reference()
    assert sorted(ref) == ["cy1", "cy2", "cy3", "cy4", "cy5"]
    assert ref["cy1"]["pressure"]["P_in"] == 0.9529
    assert ref["cy5"]["temperature"]["T_in_ref"] == 903.80
    assert ref["cy3"]["efficiency"]["f_N_inverse"] == 8.5


def test_compare_pass_and_fail(systems, steady):
    s, ss = systems["cy3"], steady["cy3"]
    summary = steady_summary("cy3", s, ss.x, ss.y)
    ref = load_reference()["cy3"]
    assert compare_report(summary, ref).passed
    tight = parse_tolerance("T_m=0.1,eta=0.001")
    cmp = compare_report(summary, ref, tight)
    assert not cmp.passed
    assert "temperature.T_m" in cmp.failed
    assert "FAIL" in cmp.format()


def test_compare_nan_never_passes(systems, steady):
    s, ss = systems["cy3"], steady["cy3"]
    summary = steady_summary("cy3", s, ss.x, ss.y)
    summary["efficiency"]["eta"] = float("nan")
    cmp = compare_report(summary, load_reference()["cy3"], parse_tolerance("eta=1e9"))
    assert cmp.failed == ["efficiency.eta"]
    del summary["pressure"]
    assert "pressure.P" in compare_report(summary, load_reference()["cy3"]).failed


def test_parse_tolerance():
    tol = parse_tolerance("P=0.001, rho_s=2%")
    assert tol["P"] == 0.001 and tol["rho_s"] == "2%"
    assert tol["eta"] == DEFAULT_TOLERANCE["eta"]
    for bad in ("Q=1", "P", "P=-1", "P=abc"):
        with pytest.raises(ValueError):
            parse_tolerance(bad)


def test_cli_steady(tmp_path, capsys):
    assert cli.main(["steady", "--preset", "cy4", "--out", str(tmp_path)]) == cli.EXIT_OK
    summary = yaml.safe_load((tmp_path / "summary.yaml").read_text())
    assert summary["name"] == "cy4"
    assert (tmp_path / "summary.txt").exists()
    assert "cy4: P=" in capsys.readouterr().out


def test_cli_compare(tmp_path):
    assert cli.main(["compare", "--preset", "cy3", "--out", str(tmp_path)]) == cli.EXIT_OK
    assert "PASS" in (tmp_path / "compare_cy3.txt").read_text()
    summary = str(tmp_path / "summary.yaml")
    assert cli.main(["compare", "--summary", summary, "--out", str(tmp_path / "again")]) == cli.EXIT_OK
    code = cli.main(["compare", "--summary", summary, "--tolerance", "T_m=0.01", "--out", str(tmp_path)])
    assert code == cli.EXIT_TOLERANCE
    assert cli.main(["compare", "--summary", summary, "--tolerance", "bogus=1",
                     "--out", str(tmp_path)]) == cli.EXIT_CONFIG


def test_cli_run_zero_length(tmp_path):
    assert cli.main(["run", "--preset", "cy1", "--t-end", "0", "--out", str(tmp_path)]) == cli.EXIT_OK
    header, rows = read_csv(tmp_path / "timeseries.csv")
    assert len(rows) == 1 and float(rows[0][0]) == 0.0
    assert (tmp_path / "profiles_long.csv").exists()


def test_cli_run_several_presets(tmp_path):
    code = cli.main(["run", "--preset", "cy1", "cy2", "--t-end", "5", "--out", str(tmp_path)])
    assert code == cli.EXIT_OK
    for name in ("cy1", "cy2"):
        _, rows = read_csv(tmp_path / name / "timeseries.csv")
        assert float(rows[-1][0]) == 5.0


def test_cli_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("preset: cy1\ngeometry:\n  r_x: 4 m\n")
    assert cli.main(["steady", "--scenario", str(bad), "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    assert "configuration error" in capsys.readouterr().err
    assert cli.main(["steady", "--scenario", str(tmp_path / "missing.yaml")]) == cli.EXIT_CONFIG
    assert cli.main(["run", "--preset", "cy1", "--t-end", "-1", "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    with pytest.raises(SystemExit) as exc:
        cli.main(["steady", "--preset", "cy9"])
    assert exc.value.code == 2


def test_cli_solver_failure_writes_partial(tmp_path, configs, capsys):
    scen = tmp_path / "stiff.yaml"
    scen.write_text("preset: cy1\n" + FAILING_SOLVER)
    code = cli.main(["run", "--scenario", str(scen), "--t-end", "10", "--out", str(tmp_path)])
    assert code == cli.EXIT_SOLVER
    assert "solver failure" in capsys.readouterr().err
    _, rows = read_csv(tmp_path / "timeseries.csv")
    assert len(rows) >= 1 and float(rows[0][0]) == 0.0


def test_cli_calibrate(tmp_path, configs):
    assert cli.main(["calibrate", "--preset", "cy3", "--out", str(tmp_path)]) == cli.EXIT_OK
    text = (tmp_path / "cy3_calibrated.yaml").read_text()
    cal = yaml.safe_load(text)
    assert cal["flow"]["f_N"] == pytest.approx(configs["cy3"].flow.f_N, rel=0.05)
    # the written scenario is loadable as is
    assert cli.main(["steady", "--scenario", str(tmp_path / "cy3_calibrated.yaml"),
                     "--out", str(tmp_path)]) == cli.EXIT_OK


def test_cli_parallel_jobs(tmp_path):
    code = cli.main(["steady", "--preset", "cy1", "cy5", "--jobs", "2", "--out", str(tmp_path)])
    assert code == cli.EXIT_OK
    assert (tmp_path / "cy1" / "summary.yaml").exists()
    assert (tmp_path / "cy5" / "summary.yaml").exists()


def test_dumped_scenario_runs_from_cli(tmp_path, configs):
    path = tmp_path / "explicit.yaml"
    path.write_text(dump_scenario(configs["cy2"]))
    assert cli.main(["steady", "--scenario", str(path), "--out", str(tmp_path)]) == cli.EXIT_OK


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "cyclonesim.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    assert "calibrate" in out.stdout
