import json
import subprocess
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from ncfilter.cli import main
from ncfilter.errors import ConfigError
from ncfilter.scenarios import (
    PRESETS,
    build_field,
    build_initial_state,
    build_model,
    compare_oracle,
    config_hash,
    load_scenario,
    parse_config,
    print_config,
    run_scenario,
    run_trajectories,
)

EXPLICIT_CONFIG = """
// a hand-written scenario with explicit operator entries
{
  "system": {"dim": 2,
    "H": [[0,0],[0,0],[0,0],[0,0]],
    "L": [[0,0],[1,0],[0,0],[0,0]],
    "S": [[1,0],[0,0],[0,0],[1,0]]},
  "field": {"variant": "photon_combo",
    "gamma": {"g00": 0.5, "g11": 0.5, "g01": [0.25, 0.25]},
    "xi": {"kind": "gaussian", "omega": 1.0, "t_c": 2.0}},
  "initial_state": [[0.5,0],[0,0],[0,0],[0.5,0]],
  "measurement": "homodyne",
  "grid": {"dt": 0.01, "T": 4.0}
}
"""


def test_fig1_preset_parameters():
    name, cfg = load_scenario("fig1-ground")
    fs = build_field(cfg)
    assert fs.gamma.g11 == 0.8 and fs.gamma.g00 == 0.2 and fs.gamma.g01 == 0.0
    assert fs.xi.omega == 1.46 and fs.xi.t_c == 3.0
    rho0 = build_initial_state(cfg, 2)
    assert rho0[0, 0] == 1.0
    model = build_model(cfg)
    assert np.allclose(model.L, np.array([[0, 1], [0, 0]]))


def test_fig2_preset_parameters():
    _, cfg = load_scenario("fig2-ground")
    fs = build_field(cfg)
    assert fs.weights == (0.5, 0.5)
    assert [a.t_c for a in fs.alphas] == [3.0, 5.0]
    assert all(a.omega == 2.4 for a in fs.alphas)
    assert all(a.mode == "coherent" for a in fs.alphas)


def test_gamma_positivity_rejected():
    raw = json.dumps(PRESETS["fig1-ground"])
    bad = raw.replace('"g01": [0.0, 0.0]', '"g01": [0.9, 0.0]')
    with pytest.raises(ConfigError, match="gamma"):
        parse_config(bad)


def test_unknown_keys_are_listed():
    raw = json.loads(json.dumps(PRESETS["fig1-ground"]))
    raw["surprise"] = 1
    raw["grid"]["steps"] = 7
    with pytest.raises(ConfigError, match="surprise"):
        parse_config(json.dumps(raw))
    del raw["surprise"]
    with pytest.raises(ConfigError, match="steps"):
        parse_config(json.dumps(raw))


def test_missing_required_keys():
    with pytest.raises(ConfigError, match="missing"):
        parse_config("{}")
    with pytest.raises(ConfigError, match="not valid JSON"):
        parse_config("{")


def test_roundtrip_parse_print():
    for name in PRESETS:
        _, cfg = load_scenario(name)
        assert parse_config(print_config(cfg)) == cfg
    cfg = parse_config(EXPLICIT_CONFIG)
    assert parse_config(print_config(cfg)) == cfg


def test_comments_are_stripped():
    cfg = parse_config(EXPLICIT_CONFIG)
    assert cfg.measurement == "homodyne"
    assert cfg.dt == 0.01


def test_config_hash_tracks_semantics():
    _, cfg = load_scenario("fig1-ground")
    assert config_hash(parse_config(print_config(cfg))) == config_hash(cfg)
    changed = replace(cfg, dt=2e-3)
    assert config_hash(changed) != config_hash(cfg)
    moved = replace(cfg, out_path="elsewhere", out_format="json")
    assert config_hash(moved) == config_hash(cfg)


def test_validation_messages_carry_paths():
    raw = json.loads(json.dumps(PRESETS["fig2-ground"]))
    raw["field"]["weights"] = [0.7, 0.7]
    with pytest.raises(ConfigError, match="field.weights"):
        parse_config(json.dumps(raw))
    raw = json.loads(json.dumps(PRESETS["fig1-ground"]))
    raw["field"]["xi"]["omega"] = -1.0
    with pytest.raises(ConfigError, match="field.xi"):
        parse_config(json.dumps(raw))
    raw = json.loads(json.dumps(PRESETS["fig1-ground"]))
    raw["measurement"] = "telepathy"
    with pytest.raises(ConfigError, match="measurement"):
        parse_config(json.dumps(raw))


def test_default_horizon_rule():
    raw = json.loads(json.dumps(PRESETS["fig1-ground"]))
    del raw["grid"]
    cfg = parse_config(json.dumps(raw))
    # pulse center plus nine inverse bandwidths, rounded up
    assert cfg.horizon == np.ceil(3.0 + 9.0 / 1.46)
    assert cfg.dt == 1e-3


def test_run_scenario_counting_columns(tmp_path):
    _, cfg = load_scenario("fig1-ground")
    summary = run_scenario(cfg, name="t", out_dir=str(tmp_path))
    header = Path(summary["table"]).read_text().splitlines()[0]
    assert header == "t,flux,P_exc,P_atleast_one_count"
    # the documented artifact carries the closed-form detection limit
    assert abs(summary["final"]["P_atleast_one_count"] - 0.8) < 1e-3
    sidecar = json.loads(Path(summary["sidecar"]).read_text())
    assert sidecar["hash"] == config_hash(cfg)
    assert sidecar["seed"] == cfg.master_seed
    assert "tool_version" in sidecar and "config" in sidecar


def test_run_scenario_none_columns(tmp_path):
    raw = json.loads(json.dumps(PRESETS["fig1-ground"]))
    raw["measurement"] = "none"
    raw["grid"]["dt"] = 5e-3
    cfg = parse_config(json.dumps(raw))
    summary = run_scenario(cfg, name="t", out_dir=str(tmp_path))
    header = Path(summary["table"]).read_text().splitlines()[0]
    assert header == "t,flux,P_exc"


def test_run_scenario_homodyne_columns(tmp_path):
    cfg = parse_config(EXPLICIT_CONFIG)
    summary = run_scenario(cfg, name="t", out_dir=str(tmp_path))
    header = Path(summary["table"]).read_text().splitlines()[0]
    assert header == "t,flux,P_exc,quadrature_rate"


def test_csv_serializes_full_precision(tmp_path):
    cfg = parse_config(EXPLICIT_CONFIG)
    cfg = replace(cfg, measurement="none")
    summary = run_scenario(cfg, name="t", out_dir=str(tmp_path))
    lines = Path(summary["table"]).read_text().splitlines()
    # every value survives a text round-trip bit-exactly (17 significant digits)
    row = lines[137].split(",")
    assert float(row[0]) == 136 * cfg.dt
    val = float(row[2])
    assert f"{val:.17g}" == row[2]


def test_run_trajectories_columns_and_sidecar(tmp_path):
    _, cfg = load_scenario("fig1-ground")
    cfg = replace(cfg, dt=5e-3, horizon=6.0)
    out = run_trajectories(cfg, name="t", out_dir=str(tmp_path), n_traj=32, master_seed=5)
    header = Path(out["table"]).read_text().splitlines()[0]
    assert header.split(",") == [
        "t", "flux", "P_exc", "P_atleast_one_count",
        "mean_P_exc", "stderr_P_exc", "mean_intensity", "stderr_intensity",
    ]
    sidecar = json.loads(Path(out["sidecar"]).read_text())
    assert sidecar["M"] == 32
    assert 0.0 <= sidecar["zero_count_fraction"] <= 1.0

    raw = json.loads(json.dumps(PRESETS["fig1-ground"]))
    raw["measurement"] = "none"
    with pytest.raises(ConfigError):
        run_trajectories(parse_config(json.dumps(raw)), out_dir=str(tmp_path))


def test_compare_oracle_negative_control():
    _, cfg = load_scenario("fig1-ground")
    cfg = replace(cfg, dt=2e-3, horizon=6.0)
    assert compare_oracle(cfg, seeds=1).ok
    assert not compare_oracle(cfg, seeds=1, corrupt=True).ok


def test_cli_main_run_and_verify(tmp_path):
    code = main(["run", "fig1-ground", "--dt", "0.005", "--T", "6", "--out", str(tmp_path)])
    assert code == 0
    assert (tmp_path / "fig1-ground.csv").exists()
    code = main(["verify", "fig2-ground", "--dt", "0.005", "--T", "6", "--seeds", "1"])
    assert code == 0
    code = main([
        "verify", "fig1-ground", "--dt", "0.005", "--T", "6", "--seeds", "1",
        "--self-test-corrupt",
    ])
    assert code == 1
    assert main(["run", str(tmp_path / "missing.json")]) == 2


def test_cli_trajectories_json_format(tmp_path):
    code = main([
        "trajectories", "fig1-ground", "--dt", "0.01", "--T", "4",
        "--M", "16", "--seed", "3", "--out", str(tmp_path), "--format", "json",
    ])
    assert code == 0
    data = json.loads((tmp_path / "fig1-ground.trajectories.data.json").read_text())
    assert set(data) >= {"t", "flux", "P_exc", "mean_P_exc"}


def test_cli_entry_point_subprocess(tmp_path):
    # the installed console script is the documented external interface
    proc = subprocess.run(
        [sys.executable, "-m", "ncfilter", "run", "fig2-ground",
         "--dt", "0.01", "--T", "4", "--out", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "fig2-ground.csv").exists()
