import subprocess
import sys

import pytest

from hybridqkd import io
from hybridqkd.cli import main
from hybridqkd.params import dump_scenario, scenario_from_preset


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if not p.name.endswith("-manifest.json")}


def test_simulate_analytic(tmp_path):
    assert main(["simulate", "sns-241km", "--out", str(tmp_path)]) == 0
    rec = io.read_json(tmp_path / "sns-241km-analytic-tally.json")
    assert rec["cells"]["mu-0"]["detected"] == pytest.approx(516544784, rel=0.03)
    assert (tmp_path / "sns-241km-analytic-tally.tsv").read_text().startswith(io.HEADER)
    man = io.read_json(tmp_path / "sns-241km-analytic-manifest.json")
    assert man["command"] == "simulate" and man["scenario"] == "sns-241km"
    assert "sns-241km-analytic-tally.json" in man["outputs"]


def test_monte_carlo_rerun_is_byte_identical(tmp_path):
    args = ["simulate", "--scenario", "mdi-150km", "--mode", "monte_carlo", "--windows", "2e7", "--seed", "4"]
    main(args + ["--out", str(tmp_path / "a")])
    main(args + ["--out", str(tmp_path / "b"), "--threads", "3"])
    a, b = _files(tmp_path / "a"), _files(tmp_path / "b")
    assert a and a == b


def test_unknown_scenario_fails_cleanly(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["simulate", "nowhere-9km", "--out", str(out)]) == 2
    assert "unknown scenario" in capsys.readouterr().err
    assert not out.exists() or not any(out.iterdir())


def test_ini_scenario_file(tmp_path):
    sc = scenario_from_preset("sns-310km")
    ini = tmp_path / "mine.ini"
    ini.write_text(dump_scenario(sc))
    assert main(["keyrate", str(ini), "--asymptotic", "--out", str(tmp_path)]) == 0
    assert list(tmp_path.glob("*-keyrate.json"))


def test_keyrate_paper_values(tmp_path):
    assert main(["keyrate", "sns-431km", "--paper-values", "--out", str(tmp_path)]) == 0
    rec = io.read_json(tmp_path / "sns-431km-keyrate-paper.json")
    assert rec["r_per_pulse"] == pytest.approx(4.57e-7, rel=0.10)
    assert rec["exceeds_plob"] is True


def test_keyrate_from_tally(tmp_path):
    main(["simulate", "sns-241km", "--out", str(tmp_path)])
    tally = tmp_path / "sns-241km-analytic-tally.json"
    assert main(["keyrate", "sns-241km", "--tally", str(tally), "--out", str(tmp_path)]) == 0
    assert main(["keyrate", "sns-241km", "--tally", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2


def test_sweep_flags(tmp_path):
    assert main(["keyrate", "--sweep", "fig5", "--asymptotic", "--out", str(tmp_path)]) == 0
    cols, rows = io.read_table(tmp_path / "fig5-simulated-asymptotic.tsv")
    flag = cols.index("exceeds_PLOB")
    by = {r[0]: r[flag] for r in rows}
    assert by["sns-431km"] == "true" and by["mdi-241km"] == "false"
    assert main(["sweep", "--paper-values", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "fig5-paper-finite.tsv").exists()


def test_phase_demo(tmp_path):
    args = ["phase-demo", "--distance", "100", "--duration", "30", "--out", str(tmp_path)]
    assert main(args) == 0
    s = io.read_json(tmp_path / "phase-100km-summary.json")
    assert s["std_deg"] < 8.0
    assert 0.9 < s["duty_cycle"] < 1.0
    cols, rows = io.read_table(tmp_path / "phase-100km-histogram.tsv")
    assert sum(int(r[2]) for r in rows) > 0


def test_optimize_rerun_identical(tmp_path):
    args = ["optimize", "sns-241km", "--population", "8", "--generations", "3", "--seed", "2"]
    main(args + ["--out", str(tmp_path / "a")])
    main(args + ["--out", str(tmp_path / "b")])
    assert _files(tmp_path / "a") == _files(tmp_path / "b")
    assert "sns-241km-optimized.ini" in _files(tmp_path / "a")


def test_out_env_var(tmp_path, monkeypatch):
    monkeypatch.setenv(io.OUT_ENV, str(tmp_path / "env"))
    assert main(["simulate", "mdi-150km"]) == 0
    assert (tmp_path / "env" / "mdi-150km-analytic-tally.json").exists()


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "hybridqkd.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "simulate" in r.stdout
