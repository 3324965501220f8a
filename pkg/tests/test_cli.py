import json

import pytest

from lasermarl.cli import main

TINY_TOML = """
[world]
width_m = 200.0
height_m = 200.0
num_sensors = 4
num_uavs = 2
station_xy = [100.0, 100.0]
charge_radius_m = 50.0
num_lbds = 1
horizon_steps = 10

[train]
rollout_len = 8
chunk_len = 4
num_parallel_envs = 2
minibatch_chunks = 2
ppo_epochs = 1
total_env_steps = 32
eval_every = 2
actor_hidden = 8
critic_embed = 8

[eval]
n_episodes = 2
"""


@pytest.fixture
def tiny_config(tmp_path, monkeypatch):
    monkeypatch.setenv("LASERMARL_RUN_ROOT", str(tmp_path))
    path = tmp_path / "tiny.toml"
    path.write_text(TINY_TOML)
    return path


def test_no_command_and_unknown_command(capsys):
    assert main([]) == 2
    assert main(["bogus"]) == 2
    assert "usage" in capsys.readouterr().err


def test_validation_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[world]\neta_pv = 1.5\n")
    assert main(["simulate", "--config", str(bad), "--algo", "greedy"]) == 3
    assert "eta_pv" in capsys.readouterr().err


def test_simulate_is_reproducible(tiny_config, tmp_path):
    for d in ("a", "b"):
        assert main(["simulate", "--config", str(tiny_config), "--algo", "greedy", "--seed", "5", "--run-dir", d]) == 0
    a, b = (tmp_path / "a" / "trajectory.csv").read_bytes(), (tmp_path / "b" / "trajectory.csv").read_bytes()
    assert a == b
    assert json.loads((tmp_path / "a" / "config.json").read_text())["world"]["seed"] == 5


def test_simulate_needs_scripted_algo(tiny_config):
    assert main(["simulate", "--config", str(tiny_config), "--algo", "mappo"]) == 2


def test_oracle_prints_result(capsys):
    assert main(["oracle", "--preset", "tiny", "--horizon", "3"]) == 0
    out = capsys.readouterr().out
    assert "best_return" in out and "sequence" in out


def test_gradcheck_exit_zero(capsys):
    assert main(["gradcheck", "--seeds", "0"]) == 0
    out = capsys.readouterr().out
    for name in ("lstm_cell", "attention", "actor", "critic"):
        assert name in out


def _strip(path):
    rows = [json.loads(x) for x in path.read_text().splitlines()]
    for r in rows:
        r.pop("wall_clock")
        r.pop("config_hash")
    return rows


def test_train_eval_and_algorithm_flag(tiny_config, tmp_path):
    assert main(["train", "--config", str(tiny_config), "--algo", "mappo_tm", "--run-dir", "tm"]) == 0
    assert main(["train", "--config", str(tiny_config), "--algo", "mappo", "--run-dir", "m"]) == 0
    tm, m = tmp_path / "tm", tmp_path / "m"
    cfg_tm = json.loads((tm / "config.json").read_text())
    cfg_m = json.loads((m / "config.json").read_text())
    diff = {k for k in cfg_tm["train"] if cfg_tm["train"][k] != cfg_m["train"][k]}
    assert diff == {"use_lstm", "use_dual_attention"} and cfg_tm["world"] == cfg_m["world"]
    assert _strip(tm / "train_log.jsonl") != _strip(m / "train_log.jsonl")
    assert all(r["alpha"] is None for r in _strip(m / "train_log.jsonl"))

    ck = tm / "checkpoints" / (tm / "best_checkpoint.txt").read_text().strip()
    assert main(["eval", "--config", str(tiny_config), "--checkpoint", str(ck), "--run-dir", "ev"]) == 0
    ev = json.loads((tmp_path / "ev" / "eval.json").read_text())
    assert ev["n_episodes"] == 2 and "config_hash" in ev
    assert len(list((tmp_path / "ev" / "trajectories").glob("*.csv"))) == 2


def test_train_ablation_flags_match_vanilla(tiny_config, tmp_path):
    assert main(["train", "--config", str(tiny_config), "--algo", "mappo", "--run-dir", "m"]) == 0
    assert main(["train", "--config", str(tiny_config), "--no-lstm", "--no-dual-attention", "--run-dir", "abl"]) == 0
    assert _strip(tmp_path / "m" / "train_log.jsonl") == _strip(tmp_path / "abl" / "train_log.jsonl")


def test_train_is_reproducible(tiny_config, tmp_path):
    for d in ("r1", "r2"):
        assert main(["train", "--config", str(tiny_config), "--run-dir", d]) == 0
    r1, r2 = tmp_path / "r1", tmp_path / "r2"
    files = sorted(p.relative_to(r1) for p in r1.rglob("*") if p.is_file())
    assert files == sorted(p.relative_to(r2) for p in r2.rglob("*") if p.is_file())
    for f in files:
        if f.name == "train_log.jsonl":
            assert _strip(r1 / f) == _strip(r2 / f)
        elif f.name == "config.json":
            # the echo records its own run_dir, the only argv difference here
            a, b = (json.loads((r / f).read_text()) for r in (r1, r2))
            assert {**a, "paths": None} == {**b, "paths": None}
        else:
            assert (r1 / f).read_bytes() == (r2 / f).read_bytes(), f


def test_eval_rejects_mismatched_world(tiny_config, tmp_path):
    assert main(["train", "--config", str(tiny_config), "--run-dir", "t"]) == 0
    ck = next((tmp_path / "t" / "checkpoints").iterdir())
    args = ["eval", "--config", str(tiny_config), "--checkpoint", str(ck), "--seed", "9", "--run-dir", "e"]
    assert main(args) == 3
    assert main(args + ["--force"]) == 0


def test_eval_and_sweep_greedy(tiny_config, tmp_path):
    assert main(["eval", "--config", str(tiny_config), "--algo", "greedy", "--run-dir", "g"]) == 0
    assert main(["sweep", "--config", str(tiny_config), "--algo", "greedy", "--etas", "0.1", "0.5", "--run-dir", "s"]) == 0
    sweep = json.loads((tmp_path / "s" / "sweep.json").read_text())
    assert sweep["etas"] == [0.1, 0.5] and "config_hash" in sweep


def test_eval_learned_needs_checkpoint(tiny_config):
    assert main(["eval", "--config", str(tiny_config), "--algo", "mappo_tm"]) == 2


def test_runtime_error_exit_code(tiny_config, tmp_path):
    assert main(["eval", "--config", str(tiny_config), "--checkpoint", str(tmp_path / "none"), "--run-dir", "x"]) == 4
