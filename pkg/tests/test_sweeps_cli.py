import csv
import json

import numpy as np
import pytest

from ddcontrol.cli import main
from ddcontrol.sim.scenario import preset
from ddcontrol.sim.sweeps import Cell, cell_seed, ic_sweep, interior_minima, is_monotone, run_cells, sensitivity_sweep
from ddcontrol.verify import check_lqr_fixture, run_all

SHORT = 0.02  # orbits


def test_cell_seed():
    assert cell_seed(0, 1) == cell_seed(0, 1)
    assert len({cell_seed(0, i) for i in range(50)}) == 50


def test_ic_sweep_small(tmp_path):
    res = ic_sweep(preset("case1"), da_m=[0.0, 5.0], de_factor=[0.0, 2.0], horizon_orbits=SHORT, out_dir=tmp_path)
    assert res["settling_d_T"].shape == (2, 2)
    assert [r["status"] for r in res["rows"]] == ["ok"] * 4
    assert (tmp_path / "cell_003" / "summary.json").is_file()
    with open(tmp_path / "map.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [float(r["da_m"]) for r in rows] == [0, 0, 5, 5]
    base = preset("case1")
    cell = json.loads((tmp_path / "cell_003" / "scenario.json").read_text())
    assert cell["leader"]["a_km"] == pytest.approx(base.leader.a_km + 5e-3)
    assert cell["leader"]["e"] == pytest.approx(base.leader.e + 2 * base.follower.e)


def test_sensitivity_rows_and_parallel():
    kw = dict(noise_cm2=(400.0,), eps_beta=(0.0, 0.2), horizon_orbits=SHORT)
    rows = sensitivity_sweep(preset("case1"), **kw)
    assert [(r["S_hat_cm2"], r["eps_beta"], r["beta_mode"]) for r in rows] == \
        [(400.0, 0.0, "random"), (400.0, 0.2, "random")]
    assert all(r["status"] == "ok" for r in rows)
    assert sensitivity_sweep(preset("case1"), parallel=2, **kw) == rows


def test_failed_cell_is_recorded():
    good = preset("case1", duration_orbits=SHORT).to_dict()
    bad = preset("case1", duration_orbits=SHORT).to_dict()
    bad["leader"]["e"] = 1.5
    rows = run_cells([Cell(0, {}, good), Cell(1, {}, bad)])
    assert rows[0]["status"] == "ok"
    assert rows[1]["status"].startswith("failed")


def test_interior_minima_and_monotone():
    bowl = np.add.outer((np.arange(5) - 2.0) ** 2, (np.arange(5) - 2.0) ** 2)
    assert (2, 2) in interior_minima(bowl)
    assert not is_monotone(bowl)
    ramp = np.add.outer(np.arange(4.0), np.arange(4.0))
    assert interior_minima(ramp) == []
    assert is_monotone(ramp)
    assert interior_minima(np.full((3, 3), np.nan)) == []


def test_cli_presets(capsys):
    assert main(["presets"]) == 0
    out = capsys.readouterr().out
    assert all(f"case{i}" in out for i in range(1, 5))
    assert main(["presets", "--show", "case3"]) == 0
    assert '"alpha_constraint": true' in capsys.readouterr().out


def test_cli_usage_errors(tmp_path, capsys):
    missing = tmp_path / "nowhere.yaml"
    assert main(["run", "--scenario", str(missing)]) == 2
    assert str(missing) in capsys.readouterr().err
    assert main(["run", "--override", "warp=9", "--out", str(tmp_path)]) == 2
    assert main(["bogus"]) == 2


def test_cli_run_override_matches_case3(tmp_path):
    args = ["--override", "duration_orbits=0.02", "--decimate", "1"]
    assert main(["run", "--override", "alpha_constraint=true", *args, "--out", str(tmp_path / "a")]) == 0
    assert main(["run", "--preset", "case3", *args, "--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "timeseries.csv").read_text()
    b = (tmp_path / "b" / "timeseries.csv").read_text()
    assert a == b
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["ok"] and summary["metrics"]["min_alpha_margin"] is not None


def test_cli_run_scenario_file(tmp_path):
    path = tmp_path / "s.yaml"
    path.write_text("preset: case2\nduration_orbits: 0.01\n")
    assert main(["run", "--scenario", str(path), "--seed", "4", "--out", str(tmp_path / "o")]) == 0
    assert json.loads((tmp_path / "o" / "scenario.json").read_text())["seed"] == 4


def test_cli_sweep(tmp_path):
    out = tmp_path / "ic"
    assert main(["sweep", "ic", "--grid", "2", "--orbits", "0.01", "--out", str(out)]) == 0
    assert (out / "map.csv").is_file() and (out / "settling_d_T.csv").is_file()


def test_verify_checks_pass(capsys):
    checks = run_all()
    assert [c.passed for c in checks] == [True] * 5
    assert check_lqr_fixture().value < 0.01
    assert main(["verify"]) == 0
    out = capsys.readouterr().out
    assert "ARE residual" in out and "FAIL" not in out
