"""JSON documents: world snapshots, parameter checkpoints and config digests."""

from __future__ import annotations

import base64
import hashlib
import json
from pathlib import Path
from typing import Mapping

import numpy as np

from lasermarl.autograd import Tensor
from lasermarl.errors import ArgumentError
from lasermarl.sim import WorldConfig, WorldState

WORLD_SCHEMA = "lasermarl.world/1"
PARAMS_SCHEMA = "lasermarl.params/1"


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(obj) -> str:
    """Stable 16-hex-digit digest of a config (dataclass or plain dict)."""
    if hasattr(obj, "to_dict"):
        obj = obj.to_dict()
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:16]


def encode_array(a: np.ndarray) -> dict:
    # asarray keeps 0-d shapes; tobytes always emits C order
    a = np.asarray(a, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes(order="C")).decode("ascii")}


def decode_array(d: Mapping) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(tuple(d["shape"]))


# ----------------------------------------------------------------------------- worlds


def world_to_dict(world: WorldState) -> dict:
    return {
        "schema": WORLD_SCHEMA,
        "config": world.config.to_dict(),
        "uavs": [
            {
                "x": float(world.uav_xy[i, 0]),
                "y": float(world.uav_xy[i, 1]),
                "energy_j": float(world.energy[i]),
                "active": bool(world.active[i]),
                "charging_lbd": None if world.charging_lbd[i] < 0 else int(world.charging_lbd[i]),
            }
            for i in range(len(world.energy))
        ],
        "sensors": [
            {"x": float(x), "y": float(y), "aoi_s": float(a)} for (x, y), a in zip(world.sensor_xy, world.aoi)
        ],
        "lbd_busy": [bool(b) for b in world.lbd_busy],
        "step": int(world.step),
        "rng_state": world.rng_state,
    }


def world_from_dict(d: Mapping) -> WorldState:
    if d.get("schema") != WORLD_SCHEMA:
        raise ArgumentError(f"unsupported world snapshot schema {d.get('schema')!r}")
    uavs, sensors = d["uavs"], d["sensors"]
    return WorldState(
        config=WorldConfig.from_dict(d["config"]),
        uav_xy=np.array([[u["x"], u["y"]] for u in uavs], dtype=np.float64).reshape(-1, 2),
        energy=np.array([u["energy_j"] for u in uavs], dtype=np.float64),
        active=np.array([u["active"] for u in uavs], dtype=bool),
        charging_lbd=np.array([-1 if u["charging_lbd"] is None else u["charging_lbd"] for u in uavs], dtype=np.int64),
        sensor_xy=np.array([[s["x"], s["y"]] for s in sensors], dtype=np.float64).reshape(-1, 2),
        aoi=np.array([s["aoi_s"] for s in sensors], dtype=np.float64),
        lbd_busy=np.array(d["lbd_busy"], dtype=bool),
        step=int(d["step"]),
        rng_state=d["rng_state"],
    )


def save_world(world: WorldState, path) -> None:
    Path(path).write_text(json.dumps(world_to_dict(world), indent=1))


def load_world(path) -> WorldState:
    return world_from_dict(json.loads(Path(path).read_text()))


# ----------------------------------------------------------------------------- parameters


def params_to_dict(params: Mapping[str, Tensor | np.ndarray], tag: str | None = None) -> dict:
    head = {"schema": PARAMS_SCHEMA} if tag is None else {"schema": PARAMS_SCHEMA, "config_hash": tag}
    return {
        **head,
        "params": {
            name: encode_array(p.data if isinstance(p, Tensor) else p) for name, p in sorted(params.items())
        },
    }


def params_from_dict(d: Mapping) -> dict[str, np.ndarray]:
    if d.get("schema") != PARAMS_SCHEMA:
        raise ArgumentError(f"unsupported parameter checkpoint schema {d.get('schema')!r}")
    return {name: decode_array(v) for name, v in d["params"].items()}


def save_params(params: Mapping[str, Tensor | np.ndarray], path, tag: str | None = None) -> None:
    Path(path).write_text(json.dumps(params_to_dict(params, tag)))


def load_params(path) -> dict[str, np.ndarray]:
    return params_from_dict(json.loads(Path(path).read_text()))


def assign_params(target: Mapping[str, Tensor], values: Mapping[str, np.ndarray]) -> None:
    missing = set(target) - set(values)
    extra = set(values) - set(target)
    if missing or extra:
        raise ArgumentError(f"parameter names differ: missing {sorted(missing)}, unexpected {sorted(extra)}")
    for name, t in target.items():
        if values[name].shape != t.shape:
            raise ArgumentError(f"parameter {name}: shape {values[name].shape} != {t.shape}")
        t.data = values[name].copy()
