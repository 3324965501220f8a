import json

import numpy as np
import pytest

from lasermarl.errors import ArgumentError
from lasermarl.policies import Actor, DualAttentionCritic
from lasermarl.serialization import (
    assign_params,
    config_hash,
    decode_array,
    encode_array,
    load_params,
    params_from_dict,
    save_params,
)
from lasermarl.sim import WorldConfig


@pytest.mark.parametrize("shape", [(), (1,), (3, 4), (2, 3, 5)])
def test_array_round_trip(shape, rng):
    a = rng.standard_normal(shape)
    b = decode_array(json.loads(json.dumps(encode_array(a))))
    assert b.shape == a.shape
    assert a.tobytes() == b.tobytes()


def test_non_contiguous_array(rng):
    a = rng.standard_normal((4, 5)).T
    np.testing.assert_array_equal(decode_array(encode_array(a)), a)


def test_params_round_trip(tmp_path):
    critic = DualAttentionCritic(2, 3, embed=4, mlp_hidden=4, seed=9)
    save_params(critic.params, tmp_path / "c.json", tag="abc")
    assert json.loads((tmp_path / "c.json").read_text())["config_hash"] == "abc"
    other = DualAttentionCritic(2, 3, embed=4, mlp_hidden=4, seed=1)
    assign_params(other.params, load_params(tmp_path / "c.json"))
    for name, p in critic.params.items():
        assert p.data.tobytes() == other.params[name].data.tobytes()
        assert p.shape == other.params[name].shape


def test_assign_params_mismatch():
    a, b = Actor(5, hidden=4), Actor(5, hidden=4, use_lstm=False)
    with pytest.raises(ArgumentError):
        assign_params(a.params, {k: v.data for k, v in b.params.items()})


def test_wrong_schema():
    with pytest.raises(ArgumentError):
        params_from_dict({"schema": "other", "params": {}})


def test_config_hash_stable():
    assert config_hash(WorldConfig()) == config_hash(WorldConfig())
    assert config_hash(WorldConfig()) != config_hash(WorldConfig(eta_pv=0.2))
    assert len(config_hash(WorldConfig())) == 16
