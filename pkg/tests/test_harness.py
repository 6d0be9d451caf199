"""Scenario configs, catalog, suite execution, CLI exit codes."""

import json

import pytest

from finslerkit.cli import main
from finslerkit.errors import ConfigError
from finslerkit.harness import (
    OPERATIONS,
    SUITES,
    ScenarioConfig,
    check_above,
    check_below,
    list_catalog,
    run_scenario,
)


def good_config(**overrides):
    cfg = {
        "seed": 0,
        "metric": {"family": "euclidean", "dim": 2},
        "operation": "spray-suite",
        "params": {"n": 10},
    }
    cfg.update(overrides)
    return cfg


# ------------------------------------------------------------------
# config validation


def test_config_roundtrip():
    cfg = ScenarioConfig.from_dict(good_config())
    assert cfg.seed == 0
    assert cfg.operation == "spray-suite"
    assert cfg.tol_scale == 1.0


@pytest.mark.parametrize(
    "mangle",
    [
        lambda c: [c],
        lambda c: {**c, "schema": 99},
        lambda c: {k: v for k, v in c.items() if k != "seed"},
        lambda c: {**c, "seed": "soon"},
        lambda c: {k: v for k, v in c.items() if k != "metric"},
        lambda c: {**c, "metric": {"family": "taxicab"}},
        lambda c: {**c, "operation": "teleport"},
        lambda c: {**c, "params": [1, 2]},
        lambda c: {**c, "tolerances": {"tol_scale": 0.0}},
    ],
)
def test_config_refusals(mangle):
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict(mangle(good_config()))


def test_bad_metric_params_surface_as_config_error():
    cfg = good_config(metric={"family": "minkowski-norm", "dim": 2, "c": -1.0})
    with pytest.raises(ConfigError):
        run_scenario(cfg)


def test_asymmetry_requires_flat_drift():
    cfg = good_config(
        metric={"family": "randers", "dim": 2, "beta": [0.5, 0.0], "kappa": 0.3},
        operation="distance-asymmetry",
        params={"n": 4},
    )
    with pytest.raises(ConfigError):
        run_scenario(cfg)


# ------------------------------------------------------------------
# catalog


def test_catalog_contents():
    cat = list_catalog()
    assert cat["families"] == [
        "euclidean",
        "hyperbolic-half-plane",
        "minkowski-norm",
        "randers",
        "riemannian",
        "round-sphere-patch",
    ]
    assert len(cat["suites"]) == 9
    assert len(cat["operations"]) == 5
    for entry in cat["suites"].values():
        assert entry["description"]


def test_catalog_filter():
    cat = list_catalog("submetry")
    assert sorted(cat["operations"]) == [
        "submetry-ball-image",
        "submetry-differential",
    ]
    assert sorted(cat["suites"]) == ["submetry-suite"]
    assert cat["families"] == []


def test_catalog_is_deterministic():
    a = json.dumps(list_catalog(), sort_keys=True)
    b = json.dumps(list_catalog(), sort_keys=True)
    assert a == b


def test_registry_descriptions_cover_everything():
    for name, (fn, desc, schema) in {**SUITES, **OPERATIONS}.items():
        assert callable(fn) and desc and isinstance(schema, dict), name


# ------------------------------------------------------------------
# check helpers


def test_check_helpers():
    c = check_below("x", 1e-9, 1e-6)
    assert c.passed and c.direction == "below"
    c = check_above("y", 0.1, 0.5)
    assert not c.passed and c.direction == "above"


# ------------------------------------------------------------------
# running scenarios


def test_quick_suite_passes(tmp_path):
    report = run_scenario(good_config(), out_dir=str(tmp_path))
    assert report.passed
    assert report.checks
    assert report.wall_time > 0.0
    data = json.loads((tmp_path / "report.json").read_text())
    assert data["passed"] is True
    assert data["scenario"]["operation"] == "spray-suite"
    assert all(c["passed"] for c in data["checks"])


def test_overrides_take_precedence():
    report = run_scenario(good_config(), seed=5, tol_scale=2.0)
    assert report.scenario["seed"] == 5
    assert report.scenario["tol_scale"] == 2.0


def test_numerical_failure_is_folded_into_a_check():
    cfg = good_config(
        metric={"family": "hyperbolic-half-plane", "dim": 2},
        operation="normal-radius",
        params={"p": [0.0, -1.0]},
    )
    report = run_scenario(cfg)
    assert not report.passed
    assert report.checks[0].name == "execution"
    assert "DomainError" in report.checks[0].detail


def test_tol_scale_tightens_thresholds():
    # flat families have exactly-zero residuals, so tightening only bites
    # on a curved family with FD-level noise
    cfg = good_config(metric={"family": "hyperbolic-half-plane", "dim": 2})
    report = run_scenario(cfg, tol_scale=1e-12)
    assert not report.passed


def test_canonical_bytes_reproducibility():
    r1 = run_scenario(good_config())
    r2 = run_scenario(good_config())
    assert r1.canonical_bytes() == r2.canonical_bytes()
    parsed = json.loads(r1.canonical_bytes().decode())
    assert "wall_time" not in parsed
    assert parsed["passed"] is True


def test_reproducibility_suite_passes():
    report = run_scenario(good_config(operation="reproducibility-suite"))
    assert report.passed
    assert report.checks[0].name == "reports-byte-identical"


def test_asymmetry_csv_artifact(tmp_path):
    cfg = good_config(
        metric={"family": "randers", "dim": 2, "beta": [0.5, 0.0]},
        operation="distance-asymmetry",
        params={"n": 8},
    )
    report = run_scenario(cfg, out_dir=str(tmp_path))
    assert report.passed
    assert report.artifacts == ["asymmetry.csv"]
    lines = (tmp_path / "asymmetry.csv").read_text().strip().splitlines()
    assert lines[0].split(",") == ["p0", "p1", "q0", "q1", "rho_pq", "rho_qp"]
    assert len(lines) == 9
    row = [float(v) for v in lines[1].split(",")]
    assert row[4] != row[5]


def test_normal_radius_artifact(tmp_path):
    cfg = good_config(
        operation="normal-radius", params={"p": [0.0, 0.0], "cap": 0.5}
    )
    report = run_scenario(cfg, out_dir=str(tmp_path))
    assert report.passed
    data = json.loads((tmp_path / "normal_radius.json").read_text())
    # flat plane has no conjugate points: the cap is certified outright
    assert data["radius"] == pytest.approx(0.5, abs=1e-12)


def test_summary_lines(capsys):
    report = run_scenario(good_config())
    text = report.summary()
    assert text.endswith("overall: PASS")
    assert all(
        line.startswith("[PASS]") for line in text.splitlines()[:-1]
    )


# ------------------------------------------------------------------
# CLI


def write_config(tmp_path, cfg):
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def test_cli_run_passes(tmp_path, capsys):
    code = main(["run", write_config(tmp_path, good_config())])
    out = capsys.readouterr().out
    assert code == 0
    assert "overall: PASS" in out


def test_cli_run_fails_with_tight_tolerances(tmp_path, capsys):
    cfg = good_config(metric={"family": "hyperbolic-half-plane", "dim": 2})
    code = main(["run", write_config(tmp_path, cfg), "--tol-scale", "1e-12"])
    out = capsys.readouterr().out
    assert code == 1
    assert "FAIL" in out


def test_cli_rejects_bad_config(tmp_path, capsys):
    cfg = good_config(operation="teleport")
    code = main(["run", write_config(tmp_path, cfg)])
    err = capsys.readouterr().err
    assert code == 2
    assert "config error" in err


def test_cli_rejects_missing_file(tmp_path, capsys):
    code = main(["run", str(tmp_path / "nope.json")])
    assert code == 2


def test_cli_catalog(capsys):
    code = main(["catalog", "submetry"])
    out = capsys.readouterr().out
    assert code == 0
    cat = json.loads(out)
    assert "submetry-suite" in cat["suites"]


def test_cli_run_writes_outputs(tmp_path, capsys):
    out_dir = tmp_path / "results"
    code = main(
        ["run", write_config(tmp_path, good_config()), "--out", str(out_dir),
         "--seed", "3"]
    )
    capsys.readouterr()
    assert code == 0
    data = json.loads((out_dir / "report.json").read_text())
    assert data["scenario"]["seed"] == 3


def test_cli_bench_writes_table(tmp_path, capsys):
    out_file = tmp_path / "bench.json"
    code = main(["bench", "--batch", "30", "--out", str(out_file)])
    capsys.readouterr()
    assert code == 0
    table = json.loads(out_file.read_text())
    assert set(table["modes"]) == {"numba", "numpy"}
    assert table["speedup"]["spray"] > 0.0
