import json

import pytest

from lasermarl.config import RunConfig, load_config, parse_config
from lasermarl.errors import ConfigError


def test_empty_document_defaults():
    cfg = parse_config("")
    assert cfg.world.eta_pv == 0.15 and cfg.world.num_lbds == 10
    assert cfg.algorithm == "mappo_tm"
    assert cfg == RunConfig()


def test_values_and_coercion():
    cfg = parse_config(
        'algorithm = "mappo"\nseed = 4\n[world]\neta_pv = 0.2\nwidth_m = 500\nstation_xy = [250, 250]\n'
        "[train]\ntotal_env_steps = 1024\n[sweep]\netas = [0.1, 0.2]\n"
    )
    assert cfg.world.eta_pv == 0.2 and cfg.world.width_m == 500.0 and isinstance(cfg.world.width_m, float)
    assert cfg.world.station_xy == (250.0, 250.0)
    assert cfg.world.seed == 4 and cfg.train.seed == 4
    assert not cfg.train.use_lstm and not cfg.train.use_dual_attention
    assert cfg.sweep.etas == (0.1, 0.2)


def test_eta_out_of_range():
    with pytest.raises(ConfigError, match=r"eta_pv must lie in \(0,1\]") as err:
        parse_config("[world]\neta_pv = 1.5\n")
    assert err.value.field == "world.eta_pv"


def test_misspelled_key_is_named():
    with pytest.raises(ConfigError, match="charg_radius_m") as err:
        parse_config("[world]\ncharg_radius_m = 100\n")
    assert err.value.field == "world.charg_radius_m"


def test_unknown_section_and_algorithm():
    with pytest.raises(ConfigError, match="wrld"):
        parse_config("[wrld]\n")
    with pytest.raises(ConfigError, match="algorithm"):
        parse_config('algorithm = "dqn"\n')


def test_parse_error_has_location():
    with pytest.raises(ConfigError, match=r"line 2"):
        parse_config("[world]\neta_pv = = 3\n")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "nope.toml")


def test_echo_and_hash(tmp_path):
    cfg = parse_config("[world]\neta_pv = 0.25\n")
    path = cfg.echo(tmp_path / "run")
    data = json.loads(path.read_text())
    assert data["config_hash"] == cfg.hash and data["world"]["eta_pv"] == 0.25
    assert cfg.hash != RunConfig().hash


def test_run_root_env(tmp_path, monkeypatch):
    monkeypatch.setenv("LASERMARL_RUN_ROOT", str(tmp_path))
    assert parse_config('[paths]\nrun_dir = "x"\n').resolved_run_dir() == tmp_path / "x"


def test_shipped_configs_parse():
    from pathlib import Path

    from lasermarl.metrics import scaled_preset

    root = Path(__file__).resolve().parents[1] / "configs"
    assert load_config(root / "scaled.toml").world == scaled_preset(0)
    assert load_config(root / "default.toml").algorithm == "greedy"
