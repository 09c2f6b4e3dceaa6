import json

import pytest

from plaplace.cli import main
from plaplace.scenarios import DEFAULTS, ConfigError, materialize, scenario_names

REGISTRY = ["exponents-selfcheck", "barenblatt-accuracy", "moment-estimate", "uniform-integrability",
            "moment-threshold", "mass-conservation", "weak-convergence", "gradient-annulus", "bb-action",
            "wasserstein-rate", "junning-diagnostics"]


def _write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def _strip(report):
    report = dict(report)
    report.pop("timestamp")
    return report


def test_registry_complete(capsys):
    assert scenario_names() == REGISTRY
    assert main(["list-scenarios"]) == 0
    out = capsys.readouterr().out
    assert all(name in out for name in REGISTRY)


@pytest.mark.parametrize("name", REGISTRY)
@pytest.mark.parametrize("tier", ["smoke", "full"])
def test_defaults_validate(name, tier):
    cfg = materialize({"scenario": name}, tier)
    assert cfg["tier"] == tier and cfg["scenario"] == name and "seed" in cfg


@pytest.mark.parametrize("cfg", [
    {"scenario": "nope"},
    {"scenario": "mass-conservation", "bogus": 1},
    {"scenario": "mass-conservation", "params": {"cases": [{"N": 2, "p": 2.5}]}},
    {"scenario": "weak-convergence", "params": {"N": 1, "p": 1.7}},
    {"scenario": "mass-conservation", "solver": {"cfl_safety": 2.0}},
    {"scenario": "mass-conservation", "seed": -3},
    {"scenario": "weak-convergence", "measure": {"atoms": [[1.0, -1.0]]}},
])
def test_invalid_configs_exit_2(tmp_path, cfg):
    with pytest.raises(ConfigError):
        materialize(cfg)
    assert main(["validate", "--config", _write(tmp_path, cfg)]) == 2
    assert main(["run", "--config", _write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 2


def test_unreadable_config(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["validate", "--config", str(bad)]) == 2
    assert main(["validate", "--config", str(tmp_path / "missing.json")]) == 2


def test_validate_echoes_materialised_config(tmp_path, capsys):
    assert main(["validate", "--config", _write(tmp_path, {"scenario": "moment-threshold"}), "--tier", "full"]) == 0
    echoed = json.loads(capsys.readouterr().out)
    assert echoed["options"]["dims"] == DEFAULTS["moment-threshold"]["full"]["options"]["dims"]


def test_run_writes_deterministic_report(tmp_path):
    cfg = _write(tmp_path, {"scenario": "wasserstein-rate", "seed": 11,
                            "options": {"computed_cases": [], "analytic_cases": [{"N": 2, "p": 1.85}]}})
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "b")]) == 0
    ra = json.loads((tmp_path / "a" / "report.json").read_text())
    rb = json.loads((tmp_path / "b" / "report.json").read_text())
    assert _strip(ra) == _strip(rb)
    assert ra["seed"] == 11 and ra["config"]["options"]["oracle_pairs"] == 30
    assert set(ra["timestamp"]) >= {"started", "finished", "timings_s"}
    for name, fname in ra["tables"].items():
        a = (tmp_path / "a" / fname).read_text()
        assert a == (tmp_path / "b" / fname).read_text() and a.count("\n") >= 1
    other = _write(tmp_path, {"scenario": "wasserstein-rate", "seed": 12,
                              "options": {"computed_cases": [], "analytic_cases": [{"N": 2, "p": 1.85}]}}, "c2.json")
    main(["run", "--config", other, "--out", str(tmp_path / "c")])
    rc = json.loads((tmp_path / "c" / "report.json").read_text())
    assert rc["summary"] == ra["summary"] and (tmp_path / "c" / "oracle.csv").read_text() != (tmp_path / "a" / "oracle.csv").read_text()


def test_failed_criteria_exit_1(tmp_path):
    cfg = _write(tmp_path, {"scenario": "moment-threshold", "options": {"dims": [2], "fit_points": 4}})
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "ok")]) == 0
    strict = _write(tmp_path, {"scenario": "barenblatt-accuracy", "options": {"min_ratio": 100.0}}, "s.json")
    assert main(["run", "--config", strict, "--out", str(tmp_path / "o")]) == 1
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["passed"] is False and any(not c["passed"] for c in rep["criteria"])


def test_solver_failure_exit_3(tmp_path):
    cfg = _write(tmp_path, {"scenario": "mass-conservation", "solver": {"max_steps": 5}})
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 3
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["status"] == "solver_error" and rep["passed"] is False


def test_user_measure_family(tmp_path):
    from plaplace.radial import Field, make_grid, write_field
    import numpy as np
    g = make_grid(1.0, 20, N=2)
    write_field(Field(g, np.full(20, 0.1)), tmp_path / "dens.csv")
    cfg = _write(tmp_path, {"scenario": "mass-conservation",
                            "measure": {"atoms": [[0.5, 0.3]], "density_csv": "dens.csv", "n": 10}})
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    text = (tmp_path / "o" / "mass_conservation.csv").read_text()
    assert ",user," in text


@pytest.mark.parametrize("name", REGISTRY)
def test_smoke_tier_passes_quickly(name):
    import time

    from plaplace.scenarios import run_scenario

    started = time.perf_counter()
    res = run_scenario(materialize({"scenario": name}, "smoke"))
    assert time.perf_counter() - started < 60.0
    assert res.passed, [c.to_dict() for c in res.criteria if not c.passed]
