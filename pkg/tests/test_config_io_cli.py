import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as hs

from kyleback import config as cfgmod, io as kio, pricing, strategies
from kyleback.cli import main
from kyleback.errors import ConfigError, IoError
from kyleback.model import ConditionResult, EquilibriumReport, MarketModel, TimeGrid
from kyleback.scenarios import run_scenario
from kyleback.simulate import simulate

BRIDGE_CFG = """
[scenario]
name = small
seed = 3
paths = 200
checks = known_tau

[grid]
t_end = 1
n_steps = 100
refinement = 50, 100, 400

[rule]
kind = linear
lambda0 = 1

[strategy]
kind = bridge

[thresholds]
efficiency_rms = 0.1
"""


def small_bundle(n_steps=10, paths=2):
    rule = pricing.make_linear_rule(0.0, 1.0)
    st = strategies.bridge_strategy(strategies.rule_target(rule, 1.0), 1.0, 1.0)
    return simulate(rule, st, MarketModel(), TimeGrid(0, 1, n_steps), paths, 0)


def test_bundled_configs_parse_and_build():
    names = cfgmod.bundled_configs()
    assert {"bridge_kyle", "cs_unknown_tau", "cs_constant_lambda"} <= set(names)
    for n in names:
        sc = cfgmod.build(cfgmod.load(n))
        assert sc.n_paths > 0


def test_roundtrip_bundled():
    for n in cfgmod.bundled_configs():
        c = cfgmod.load(n)
        assert cfgmod.parse(cfgmod.serialize(c)) == c


_key = hs.text("abcdefghijklmnopqrstuvwxyz_", min_size=1, max_size=8)
_val = hs.text("abcdefghijklmnopqrstuvwxyz0123456789.-*()+ ", min_size=1, max_size=12).map(str.strip).filter(bool)


@settings(max_examples=50, deadline=None)
@given(hs.dictionaries(hs.sampled_from(cfgmod.SECTION_ORDER), hs.dictionaries(_key, _val, max_size=5), max_size=5))
def test_roundtrip_property(sections):
    c = cfgmod.ScenarioConfig(sections)
    once = cfgmod.parse(cfgmod.serialize(c))
    assert once == c
    assert cfgmod.parse(cfgmod.serialize(once)) == once


def test_seed_priority():
    c = cfgmod.parse(BRIDGE_CFG)
    assert cfgmod.resolve_seed(c, 9, {"KB_SEED": "1"}) == 9
    assert cfgmod.resolve_seed(c, None, {"KB_SEED": "1"}) == 3
    del c.sections["scenario"]["seed"]
    assert cfgmod.resolve_seed(c, None, {"KB_SEED": "1"}) == 1
    with pytest.raises(ConfigError):
        cfgmod.resolve_seed(c, None, {})


@pytest.mark.parametrize("text", ["[bogus]\nx = 1\n", "[scenario]\nseed = 1\n[rule]\nkind = cubic\n",
                                  "[scenario]\nseed = 1\n[grid]\nn_steps = many\n", "no section header"])
def test_invalid_configs(text):
    with pytest.raises(ConfigError):
        cfgmod.build(cfgmod.parse(text))


def test_missing_seed_exits_2(tmp_path, monkeypatch):
    monkeypatch.delenv("KB_SEED", raising=False)
    p = tmp_path / "c.cfg"
    p.write_text(BRIDGE_CFG.replace("seed = 3\n", ""))
    assert main(["verify", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    monkeypatch.setenv("KB_SEED", "4")
    assert main(["verify", "--config", str(p), "--out", str(tmp_path / "o")]) == 0


def test_paths_csv_rows_and_roundtrip(tmp_path):
    b = small_bundle(10, 1)
    f = kio.emit_paths_csv([b], tmp_path / "p.csv", 1)
    lines = f.read_text().splitlines()
    assert lines[0] == "path_id,t,Z,V,X,Y,xi,P"
    assert len(lines) == 12 and all(len(l.split(",")) == 8 for l in lines)
    back = kio.read_paths_csv(f)[0]
    for name in ("Z", "V", "X", "Y", "xi", "P"):
        assert np.max(np.abs(back[name] - getattr(b, name)[0])) <= 1e-15

    big = small_bundle(1000, 1)
    f = kio.emit_paths_csv(big, tmp_path / "q.csv", 10)
    assert len(f.read_text().splitlines()) == 102
    with pytest.raises(ValueError):
        kio.emit_paths_csv(big, tmp_path / "r.csv", 0)


def test_unwritable_destination(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(IoError):
        kio.emit_paths_csv(small_bundle(), blocker / "sub" / "p.csv")
    with pytest.raises(IoError):
        kio.emit_report_json(EquilibriumReport("x"), blocker / "r.json")


def test_report_json(tmp_path):
    empty = kio.emit_report_json(EquilibriumReport("e"), tmp_path / "e.json", deterministic=True)
    doc = json.loads(empty.read_text())
    assert doc["schema_version"] and doc["conditions"] == [] and "generated_at" not in doc
    assert list(doc)[:2] == ["schema_version", "name"]

    rep = EquilibriumReport("f", calibration={"lambda_0": 2 ** 0.5})
    rep.add(ConditionResult("c", float("nan"), float("inf"), False, {"v": np.float64(0.1)}))
    f = kio.emit_report_json(rep, tmp_path / "f.json")
    doc = json.loads(f.read_text())
    assert doc["conditions"][0]["pass"] is False
    assert doc["conditions"][0]["statistic"] == "NaN" and doc["conditions"][0]["threshold"] == "Infinity"
    assert doc["calibration"]["lambda_0"] == 2 ** 0.5 and "generated_at" in doc
    back, _ = kio.read_report_json(f)
    assert np.isnan(back["c"].statistic) and not back.passed


def test_run_scenario_artifacts(tmp_path):
    status, doc = run_scenario(cfgmod.parse(BRIDGE_CFG), "verify", out=tmp_path, deterministic=True)
    assert status == 0 and doc["passed"]
    assert (tmp_path / "paths.csv").exists()
    head = (tmp_path / "plot.csv").read_text().splitlines()[0]
    assert head == "t,mean_P,mean_V,rms_gap,lambda,Sigma"


def test_cs_calibrate_report_keys(tmp_path):
    assert main(["calibrate", "--config", "cs_unknown_tau", "--out", str(tmp_path), "--deterministic"]) == 0
    cal = json.loads((tmp_path / "report.json").read_text())["calibration"]
    assert cal["lambda_0"] == pytest.approx(2 ** 0.5, abs=1e-12)
    assert cal["T_switch"] == pytest.approx(1.1462, abs=1e-4)
    assert cal["post_T_profit"] == pytest.approx(2.0)


def test_constant_lambda_config_exits_1(tmp_path):
    assert main(["verify", "--config", "cs_constant_lambda", "--out", str(tmp_path), "--deterministic"]) == 1
    doc = json.loads((tmp_path / "report.json").read_text())
    res = {c["name"]: c for c in doc["conditions"]}
    assert res["necessary_residual"]["pass"] is False


def test_wealth_command(tmp_path, capsys):
    status = main(["wealth", "--config", "bridge_kyle", "--paths", "2000", "--grid", "200",
                   "--out", str(tmp_path), "--deterministic"])
    doc = json.loads((tmp_path / "report.json").read_text())
    names = [c["name"] for c in doc["conditions"]]
    assert names == ["first_order_constant", "first_order_V-P", "first_order_Z", "first_order_ramp",
                     "first_order_flip"]
    assert status == (0 if doc["passed"] else 1)
    assert "J" in doc["calibration"]


def test_report_command_rerenders(tmp_path, capsys):
    run_scenario(cfgmod.parse(BRIDGE_CFG), "verify", out=tmp_path)
    assert main(["report", str(tmp_path / "report.json"), "--out", str(tmp_path / "copy.json"),
                 "--deterministic"]) == 0
    assert "small: PASS" in capsys.readouterr().out
    assert "generated_at" not in json.loads((tmp_path / "copy.json").read_text())
    assert main(["report", str(tmp_path / "missing.json")]) == 2


def test_simulate_overrides(tmp_path):
    status, doc = run_scenario(cfgmod.parse(BRIDGE_CFG), "simulate", out=tmp_path, seed=11, n_paths=5,
                               n_steps=20, deterministic=True)
    assert status == 0 and doc["seed"] == 11 and doc["grid"]["n_steps"] == 20
    rows = (tmp_path / "paths.csv").read_text().splitlines()
    assert len(rows) == 1 + 5 * 21
