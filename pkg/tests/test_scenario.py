import json

import pytest

from ddcontrol.sim.scenario import PRESETS, Scenario, ScenarioError, parse_value, preset


def test_presets():
    assert sorted(PRESETS) == ["case1", "case2", "case3", "case4"]
    assert (preset("case2").j2, preset("case2").alpha_constraint) == (True, False)
    assert (preset("case4").j2, preset("case4").alpha_constraint) == (True, True)
    with pytest.raises(ScenarioError):
        preset("case9")


def test_period_and_steps():
    sc = preset("case1")
    assert sc.period / 3600 == pytest.approx(1.5573, abs=1e-4)
    assert sc.n_steps == round(10 * sc.period / 0.1)


@pytest.mark.parametrize("raw, value", [
    ("7e-6", 7e-6), ("1.5", 1.5), ("true", True), ("[1, 2, 3]", [1, 2, 3]), ("hold", "hold"), ("", None),
])
def test_parse_value(raw, value):
    assert parse_value(raw) == value


def test_overrides():
    sc = preset("case1").with_overrides(["alpha_constraint=true", "leader.a_km=6821.005", "lqr.R=7e-6"])
    assert sc.alpha_constraint is True
    assert sc.leader.a_km == 6821.005
    assert sc.lqr.R == 7e-6
    assert preset("case1").with_overrides(["alpha_constraint=true"]).to_dict() == \
        {**preset("case3").to_dict(), "name": "case1"}


@pytest.mark.parametrize("bad", ["nope=1", "leader.nope=1", "tau"])
def test_bad_overrides(bad):
    with pytest.raises(ScenarioError):
        preset("case1").with_overrides([bad])


@pytest.mark.parametrize("changes", [
    dict(tau=0.0), dict(decimate=0), dict(q0=[1, 1, 0, 0]), dict(x_d=[0, 60]), dict(k_s=-1.0),
    dict(alpha_max_deg=200.0), dict(rate_loop="fast"), dict(omega_bound=0.0),
    dict(leader_surface_cm2=3000.0), dict(eps_beta_amp=-0.1), dict(cd=3.0),
])
def test_validation(changes):
    with pytest.raises(ScenarioError):
        preset("case1", **changes)


def test_unknown_keys():
    with pytest.raises(ScenarioError):
        Scenario.from_dict({"warp": 9})
    with pytest.raises(ScenarioError):
        Scenario.from_dict({"density": {"kind": "constant", "warp": 1}})


@pytest.mark.parametrize("suffix", [".yaml", ".json"])
def test_save_load_round_trip(tmp_path, suffix):
    sc = preset("case4", seed=3, leader_noise_cm2=200.0)
    path = tmp_path / f"s{suffix}"
    sc.save(path)
    assert Scenario.load(path).to_dict() == sc.to_dict()


def test_load_with_preset_base(tmp_path):
    path = tmp_path / "s.yaml"
    path.write_text("preset: case2\nseed: 11\nleader:\n  a_km: 6821.002\n")
    sc = Scenario.load(path)
    assert sc.j2 and sc.seed == 11 and sc.leader.a_km == 6821.002
    assert sc.leader.e == preset("case2").leader.e
    path.write_text(json.dumps([1, 2]))
    with pytest.raises(ScenarioError):
        Scenario.load(path)
