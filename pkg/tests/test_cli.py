import csv
import inspect
import json
import math

import numpy as np
import pytest

from bqlab import boussinesq, evolution, littlewood_paley, paraproduct
from bqlab.cli import main
from bqlab.config import DEFAULT_TOLERANCES, TOLERANCE_DOCS, build_field, parse_scenario, resolve_tolerances
from bqlab.exceptions import ConfigurationError
from bqlab.littlewood_paley import DyadicPartition
from bqlab.spectral import TorusGrid, divergence_residual, load_field
from bqlab.suites import PARTITION_ENV, REGISTRY, SUITES, default_partition, run_suite, suite_checks

TG = """
name = "tg"
diagnostics = ["energy", "blowup", "theta_lp"]
[grid]
dim = 2
n = 32
[time]
T = 0.5
dt = 0.01
save_every = 10
[physics]
nu = 0.1
[initial.u]
recipe = "taylor_green"
"""

BUOYANCY = """
name = "buoyancy"
seed = 3
[grid]
n = 32
[time]
T = 0.5
dt = 0.01
[physics]
nu = 0.1
[initial.theta]
recipe = "random"
kmax = 4
"""


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------- config


def test_parse_defaults():
    sc = parse_scenario(TG)
    assert sc.grid == TorusGrid(2, 32)
    assert sc.kappa == 0.0 and sc.scheme == "production"
    assert sc.tolerances == DEFAULT_TOLERANCES
    assert str(sc.output) == "runs/tg"


def test_every_tolerance_documented():
    assert set(TOLERANCE_DOCS) == set(DEFAULT_TOLERANCES)


@pytest.mark.parametrize(
    "patch, message",
    [
        (("n = 32", "n = 100"), "power of two"),
        (('name = "tg"', ""), "key 'name'"),
        (("dt = 0.01", "dt = 0.03"), "whole number of steps"),
        (("save_every = 10", "save_every = 7"), "save_every"),
        (('recipe = "taylor_green"', 'recipe = "vortex"'), "unknown recipe"),
        (("nu = 0.1", "nu = -1.0"), "nu > 0"),
        (("[physics]", "[physic]"), "unknown top-level key"),
        (("nu = 0.1", 'nu = "fast"'), "expected float"),
    ],
)
def test_parse_errors_name_the_key(patch, message):
    with pytest.raises(ConfigurationError, match=message):
        parse_scenario(TG.replace(*patch))


def test_tolerance_overrides():
    sc = parse_scenario(TG + "[tolerances]\nenergy_residual = 1e-4\n")
    assert sc.tolerances["energy_residual"] == 1e-4
    with pytest.raises(ConfigurationError, match="unknown tolerance"):
        resolve_tolerances({"nope": 1.0})
    with pytest.raises(ConfigurationError, match="nonnegative"):
        resolve_tolerances({"energy_residual": -1.0})


def test_toml_syntax_error_reports_line():
    with pytest.raises(ConfigurationError, match="line"):
        parse_scenario("name = \n")


def test_build_field_recipes():
    g = TorusGrid(2, 32)
    spec = {"recipe": "random", "amplitude": 0.5, "kmax": 4, "slope": 1.0, "seed_offset": 0, "width": 0.3,
            "wavevector": None}
    u = build_field(g, spec, "u", seed=1)
    assert divergence_residual(u) < 1e-12
    assert np.abs(u.samples()).max() == pytest.approx(0.5)
    assert np.array_equal(u.coeffs, build_field(g, spec, "u", seed=1).coeffs)
    assert not np.array_equal(u.coeffs, build_field(g, spec, "u", seed=2).coeffs)
    with pytest.raises(ConfigurationError):
        build_field(g, dict(spec, recipe="shear"), "theta", 0)


# ---------------------------------------------------------------- simulate


def test_simulate_taylor_green_matches_decay(tmp_path):
    cfg = _write(tmp_path, "tg.toml", TG)
    out = tmp_path / "run"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    rows = _rows(out / "ledger_energy.csv")
    e0 = float(rows[0]["kinetic"])
    for r in rows:
        t = float(r["time"])
        assert float(r["kinetic"]) == pytest.approx(e0 * math.exp(-4 * 0.1 * t), rel=1e-10)
    index = _rows(out / "index.csv")
    assert [float(r["time"]) for r in index] == pytest.approx(np.linspace(0, 0.5, 6))
    f, t = load_field(out / index[-1]["file"])
    assert f.components == 3 and t == pytest.approx(0.5)
    reports = json.loads((out / "reports.json").read_text())
    assert reports[0]["pass"] is True
    blow = _rows(out / "ledger_blowup.csv")
    assert float(blow[-1]["grad_integral"]) > 0
    assert json.loads((out / "scenario.json").read_text())["name"] == "tg"


def test_simulate_buoyancy_grows_velocity(tmp_path):
    cfg = _write(tmp_path, "b.toml", BUOYANCY)
    out = tmp_path / "run"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    rows = _rows(out / "ledger_energy.csv")
    assert float(rows[0]["kinetic"]) == 0.0
    kin = [float(r["kinetic"]) for r in rows]
    assert kin[-1] > 0 and kin[-1] > kin[len(kin) // 2] > 0


def test_simulate_is_deterministic(tmp_path):
    cfg = _write(tmp_path, "b.toml", BUOYANCY)
    for name in ("a", "b"):
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / name)]) == 0
    ra, rb = _rows(tmp_path / "a/ledger_energy.csv"), _rows(tmp_path / "b/ledger_energy.csv")
    for x, y in zip(ra, rb):
        for k in x:
            assert float(x[k]) == pytest.approx(float(y[k]), rel=1e-13, abs=1e-300)


def test_simulate_invalid_grid_exit_code(tmp_path, capsys):
    cfg = _write(tmp_path, "bad.toml", TG.replace("n = 32", "n = 100"))
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 2
    assert "power of two" in capsys.readouterr().err


def test_simulate_missing_config(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "none.toml")]) == 2


@pytest.mark.parametrize("scheme", ["friedrichs", "picard"])
def test_simulate_other_schemes(tmp_path, scheme):
    text = BUOYANCY + f'[scheme]\nkind = "{scheme}"\nfriedrichs_n = 10\n'
    text = text.replace("recipe = \"random\"", "recipe = \"random\"\namplitude = 0.01")
    cfg = _write(tmp_path, "s.toml", text)
    out = tmp_path / "run"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    assert (out / "index.csv").exists()
    if scheme == "picard":
        assert (out / "ledger_picard.csv").exists()
    else:
        assert (out / "ledger_energy.csv").exists()


# ---------------------------------------------------------------- report


def test_report_single_and_sweep(tmp_path):
    runs = tmp_path / "runs"
    for nu in (0.1, 0.2):
        cfg = _write(tmp_path, f"tg{nu}.toml", TG.replace("nu = 0.1", f"nu = {nu}"))
        assert main(["simulate", "--config", str(cfg), "--out", str(runs / f"nu{nu}")]) == 0
    assert main(["report", "--dir", str(runs / "nu0.1")]) == 0
    assert (runs / "nu0.1" / "merged_energy.csv").exists()
    assert main(["report", "--dir", str(runs)]) == 0
    header = next(csv.reader(open(runs / "wide_energy.csv")))
    assert header[0] == "time"
    assert "kinetic[nu=0.1]" in header and "kinetic[nu=0.2]" in header
    assert [r["nu"] for r in _rows(runs / "runs.csv")] == ["0.1", "0.2"]
    merged = _rows(runs / "merged_energy.csv")
    assert {r["run"] for r in merged} == {"nu0.1", "nu0.2"}


def test_report_empty_dir(tmp_path, capsys):
    assert main(["report", "--dir", str(tmp_path)]) == 2
    assert "no ledgers found" in capsys.readouterr().err


# ---------------------------------------------------------------- verify and registry


def test_verify_unknown_suite(capsys):
    assert main(["verify", "--suite", "nonsense"]) == 2
    assert "unknown suite" in capsys.readouterr().err


def test_verify_subset_emits_json(tmp_path):
    out = tmp_path / "r.json"
    code = main(["verify", "--suite", "harmonic", "--check", "harmonic.partition_of_unity",
                 "--check", "harmonic.bony_reconstruction", "--out", str(out), "--quiet"])
    assert code == 0
    res = json.loads(out.read_text())
    assert res["pass"] is True and len(res["checks"]) == 2
    rep = res["checks"][0]["report"]
    assert set(rep) >= {"inequality_id", "lhs", "rhs", "fitted_C", "samples", "pass"}


def test_verify_bad_tolerance_file(tmp_path):
    cfg = _write(tmp_path, "t.toml", "[tolerances]\nbogus = 1.0\n")
    assert main(["verify", "--suite", "harmonic", "--config", str(cfg)]) == 2


def test_verify_tightened_tolerance_fails(tmp_path):
    cfg = _write(tmp_path, "t.toml", "[tolerances]\nbony_residual = 0.0\n")
    args = ["verify", "--suite", "harmonic", "--check", "harmonic.bony_reconstruction", "--quiet"]
    assert main(args + ["--out", str(tmp_path / "a.json")]) == 0
    assert main(args + ["--config", str(cfg), "--out", str(tmp_path / "b.json")]) == 1


def test_fault_injection_partition(monkeypatch):
    res = run_suite("harmonic", only={"harmonic.partition_of_unity", "harmonic.lp_reconstruction"},
                    partition=DyadicPartition(perturbation=1e-3))
    assert not res.passed
    reps = {cid: rep for cid, _, rep, _ in res.entries}
    assert reps["harmonic.partition_of_unity"].details["residual"] > 1e-4
    monkeypatch.setenv(PARTITION_ENV, "1e-3")
    assert default_partition().perturbation == 1e-3
    assert main(["verify", "--suite", "harmonic", "--check", "harmonic.partition_of_unity", "--quiet"]) == 1
    monkeypatch.setenv(PARTITION_ENV, "abc")
    with pytest.raises(ConfigurationError):
        default_partition()


def test_crashing_check_is_a_failure(monkeypatch):
    import bqlab.suites as suites

    spec = suite_checks("harmonic")[0]
    broken = type(spec)(spec.check_id, spec.suite, lambda ctx: 1 / 0, spec.checkers)
    monkeypatch.setattr(suites, "REGISTRY", [broken])
    res = run_suite("harmonic")
    assert not res.passed
    assert "ZeroDivisionError" in res.entries[0][2].details["error"]


def test_suite_pass_flag_ignores_informational():
    from bqlab.reports import EstimateReport
    from bqlab.suites import SuiteResult

    bad = EstimateReport("x", [], [], 0.0, 0, False, {})
    good = EstimateReport("y", [], [], 0.0, 0, True, {})
    assert SuiteResult("s", 0, [("a", False, bad, 0.0), ("b", True, good, 0.0)], 0.0).passed
    assert not SuiteResult("s", 0, [("a", True, bad, 0.0)], 0.0).passed


def test_registry_covers_every_estimate_checker():
    suffixes = ("_check", "_probe", "_monitor", "_report", "_sweep")
    public = set()
    for mod in (littlewood_paley, paraproduct, evolution, boussinesq):
        for name, obj in inspect.getmembers(mod, inspect.isfunction):
            if obj.__module__ == mod.__name__ and not name.startswith("_") and name.endswith(suffixes):
                public.add(name)
    reached = {c for spec in REGISTRY for c in spec.checkers}
    assert public - reached == set()
    assert {spec.suite for spec in REGISTRY} == set(SUITES)
    assert len({spec.check_id for spec in REGISTRY}) == len(REGISTRY)


def test_registry_lists_all_product_laws():
    ids = {spec.check_id for spec in REGISTRY}
    for law in paraproduct.PRODUCT_LAWS:
        assert f"harmonic.product_law.{law}" in ids
