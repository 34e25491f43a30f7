"""Config parsing and the command line front end."""

import os

import numpy as np
import pytest

from mdelab import ConfigError, DiscreteMeasure
from mdelab.cli import main
from mdelab.config import from_values, load_config, parse_config_text

PRESET_DIR = os.path.join(os.path.dirname(__file__), "..", "presets")


def preset(name):
    return os.path.join(PRESET_DIR, f"{name}.cfg")


# -- parser ------------------------------------------------------------------------

def test_parse_config_basics():
    values = parse_config_text("""
# comment
dim = 1
T = 1.0
mu0 = [[0.0, 1.0]]
mvf.kind = lipschitz_field   # trailing comment
mvf.cs = 1.0
mvf.v.kind = constant
mvf.v.value = 0.0
""")
    assert values["dim"] == 1
    assert values["mvf.kind"] == "lipschitz_field"
    assert values["mu0"] == [[0.0, 1.0]]


def test_parse_config_error_carries_line_number():
    with pytest.raises(ConfigError, match="line 3"):
        parse_config_text("dim = 1\nT = 1.0\nbogus line without equals\n")


def test_parse_config_rejects_duplicates():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config_text("dim = 1\ndim = 2\n")


def test_missing_required_key():
    with pytest.raises(ConfigError, match="mvf.kind"):
        from_values({"dim": 1, "T": 1.0, "mu0": [[0.0, 1.0]]})


def test_lipschitz_field_requires_cs():
    with pytest.raises(ConfigError, match="mvf.cs"):
        from_values({"dim": 1, "T": 1.0, "mu0": [[0.0, 1.0]],
                     "mvf.kind": "lipschitz_field",
                     "mvf.v.kind": "constant", "mvf.v.value": 0.0})


def test_all_presets_load_and_build():
    for name in ("pure_growth", "transport", "lipschitz_field", "barycenter",
                 "source_growth"):
        cfg = load_config(preset(name))
        scenario = cfg.build_scenario()
        assert scenario.horizon == 1.0
        assert scenario.mu0.total_mass() > 0.0


def test_affine_field_and_growth_wiring():
    cfg = load_config(preset("lipschitz_field"))
    scenario = cfg.build_scenario()
    vel = scenario.mvf(DiscreteMeasure.dirac([2.0]))
    assert np.allclose(vel.velocities, [[1.0]])  # 0.5 * 2.0
    assert scenario.mvf.c_h == pytest.approx(0.5)
    assert scenario.mvf.c_f == pytest.approx(1.5)
    rates = scenario.growth(np.zeros((1, 1)), scenario.mu0)
    assert rates[0] == pytest.approx(0.5)


def test_mass_coupled_growth_wiring():
    cfg = load_config(preset("source_growth"))
    scenario = cfg.build_scenario()
    rates = scenario.growth(np.zeros((1, 1)), DiscreteMeasure.dirac([0.0], 3.0))
    assert rates[0] == pytest.approx(1.0 * (1.0 - 3.0))
    assert scenario.source.radius == pytest.approx(0.5)


# -- cli ---------------------------------------------------------------------------

def test_cli_solve_writes_artifacts(tmp_path):
    out = tmp_path / "run"
    assert main(["solve", "--config", preset("pure_growth"),
                 "--out", str(out)]) == 0
    assert (out / "trajectory.csv").exists()
    assert (out / "diagnostics.csv").exists()
    header = (out / "diagnostics.csv").read_text().splitlines()[0]
    assert header == "t,mass,support_radius,atom_count"


def test_cli_solve_deterministic_outputs(tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    for out in (out_a, out_b):
        assert main(["solve", "--config", preset("transport"),
                     "--out", str(out), "--seed", "42"]) == 0
    assert (out_a / "trajectory.csv").read_bytes() == \
        (out_b / "trajectory.csv").read_bytes()
    assert (out_a / "diagnostics.csv").read_bytes() == \
        (out_b / "diagnostics.csv").read_bytes()


def test_cli_converge(tmp_path):
    out = tmp_path / "conv"
    assert main(["converge", "--config", preset("transport"),
                 "--out", str(out), "--n-list", "4,8"]) == 0
    assert (out / "convergence.csv").exists()


def test_cli_continuity(tmp_path):
    out = tmp_path / "cont"
    assert main(["continuity", "--config", preset("lipschitz_field"),
                 "--out", str(out)]) == 0
    lines = (out / "continuity.csv").read_text().splitlines()
    assert lines[0] == "t,ratio,bound"
    assert len(lines) == 9  # eight probes plus header


def test_cli_residual_single_n(tmp_path):
    out = tmp_path / "res"
    assert main(["residual", "--config", preset("pure_growth"),
                 "--out", str(out), "--n", "8"]) == 0
    lines = (out / "residual.csv").read_text().splitlines()
    assert lines[0] == "N,t,residual"


def test_cli_certify_seeded_deterministic(tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    for out in (out_a, out_b):
        assert main(["certify", "--config", preset("barycenter"),
                     "--out", str(out), "--samples", "10", "--seed", "7"]) == 0
    assert (out_a / "certify.csv").read_bytes() == (out_b / "certify.csv").read_bytes()


def test_cli_certify_broken_marginal_fails(tmp_path, capsys):
    cfg = tmp_path / "broken.cfg"
    cfg.write_text("""
name = broken
dim = 1
T = 1.0
mu0 = [[0.0, 1.0]]
mvf.kind = broken_marginal
mvf.cs = 1.0
seed = 3
""")
    rc = main(["certify", "--config", str(cfg), "--out", str(tmp_path / "o"),
               "--samples", "3"])
    captured = capsys.readouterr().out
    assert rc != 0
    assert "deficit" in captured


def test_cli_metrics(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    DiscreteMeasure.dirac([0.0]).to_csv(a)
    DiscreteMeasure.dirac([1.0]).to_csv(b)
    assert main(["metrics", str(a), str(b), "--wasserstein"]) == 0
    out = capsys.readouterr().out
    assert "flat_distance = 1" in out
    assert "wasserstein1 = 1" in out


def test_cli_atom_outside_mesh_reports_suggestion(tmp_path, capsys):
    cfg = tmp_path / "far.cfg"
    cfg.write_text("""
name = far
dim = 1
T = 1.0
mu0 = [[40.0, 1.0]]
mvf.kind = lipschitz_field
mvf.cs = 1.0
mvf.v.kind = constant
mvf.v.value = 0.0
n = 4
""")
    rc = main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o")])
    out = capsys.readouterr().out
    assert rc != 0
    assert "rerun with N >=" in out
