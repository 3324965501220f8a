"""Run configuration: a strict TOML schema over the world, trainer and evaluation settings.

Example document::

    algorithm = "mappo_tm"
    seed = 3

    [world]
    eta_pv = 0.2

    [train]
    total_env_steps = 50000

Unknown keys are fatal; every missing key takes the default of the
corresponding dataclass (the world defaults are the full-size scenario).
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from lasermarl.errors import ConfigError
from lasermarl.policies import ScriptedPolicyConfig
from lasermarl.serialization import config_hash
from lasermarl.sim import WorldConfig
from lasermarl.trainer import TrainConfig

ALGORITHMS = ("mappo_tm", "mappo", "greedy", "random")
RUN_ROOT_ENV = "LASERMARL_RUN_ROOT"


@dataclass(frozen=True)
class EvalConfig:
    n_episodes: int = 5
    seeds: tuple[int, ...] | None = None

    def episode_seeds(self, base: int) -> list[int]:
        return list(self.seeds) if self.seeds is not None else [base + i for i in range(self.n_episodes)]


@dataclass(frozen=True)
class SweepConfig:
    etas: tuple[float, ...] = (0.10, 0.15, 0.20, 0.25)
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)


@dataclass(frozen=True)
class PathsConfig:
    run_dir: str = "runs/default"
    checkpoint_in: str | None = None


@dataclass(frozen=True)
class RunConfig:
    world: WorldConfig = field(default_factory=WorldConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    scripted: ScriptedPolicyConfig = field(default_factory=ScriptedPolicyConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)
    algorithm: str = "mappo_tm"

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "world": self.world.to_dict(),
            "train": self.train.to_dict(),
            "eval": dataclasses.asdict(self.eval),
            "sweep": dataclasses.asdict(self.sweep),
            "scripted": dataclasses.asdict(self.scripted),
            "paths": dataclasses.asdict(self.paths),
        }

    @property
    def hash(self) -> str:
        # paths do not change results
        d = self.to_dict()
        d.pop("paths")
        return config_hash(d)

    def resolved_run_dir(self) -> Path:
        p = Path(self.paths.run_dir)
        root = os.environ.get(RUN_ROOT_ENV)
        return p if p.is_absolute() or not root else Path(root) / p

    def with_seed(self, seed: int) -> "RunConfig":
        return dataclasses.replace(
            self, world=self.world.replace(seed=seed), train=self.train.replace(seed=seed)
        )

    def with_algorithm(self, algorithm: str) -> "RunConfig":
        if algorithm not in ALGORITHMS:
            raise ConfigError("algorithm", f"algorithm must be one of {', '.join(ALGORITHMS)}")
        train = self.train
        if algorithm == "mappo":
            train = train.replace(use_lstm=False, use_dual_attention=False)
        return dataclasses.replace(self, algorithm=algorithm, train=train)

    def echo(self, run_dir: Path) -> Path:
        run_dir.mkdir(parents=True, exist_ok=True)
        path = run_dir / "config.json"
        path.write_text(json.dumps({"config_hash": self.hash, **self.to_dict()}, indent=1, sort_keys=True) + "\n")
        return path


_SECTIONS = {
    "world": WorldConfig,
    "train": TrainConfig,
    "eval": EvalConfig,
    "sweep": SweepConfig,
    "scripted": ScriptedPolicyConfig,
    "paths": PathsConfig,
}
_TOP_LEVEL = {"algorithm", "seed"}
_TUPLE_FIELDS = {"station_xy", "sensor_positions", "seeds", "etas"}


def _coerce(section: str, key: str, value: Any, ftype: Any) -> Any:
    if key in _TUPLE_FIELDS and isinstance(value, list):
        return tuple(tuple(v) if isinstance(v, list) else v for v in value)
    is_float = ftype is float or (isinstance(ftype, str) and ftype.startswith("float"))
    if is_float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    return value


def _build(section: str, cls, table: dict):
    if not isinstance(table, dict):
        raise ConfigError(section, f"[{section}] must be a table")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    for key in table:
        if key not in fields:
            raise ConfigError(f"{section}.{key}", f"unknown key '{key}' in [{section}]")
    kwargs = {k: _coerce(section, k, v, fields[k].type) for k, v in table.items()}
    try:
        return cls(**kwargs)
    except ConfigError as err:
        raise ConfigError(f"{section}.{err.field}", str(err).split(": ", 1)[-1]) from None
    except (TypeError, ValueError) as err:
        raise ConfigError(section, str(err)) from None


def parse_config(text: str) -> RunConfig:
    """Parse a TOML document into a validated :class:`RunConfig`."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as err:
        raise ConfigError("", f"parse error: {err}") from None
    for key, value in doc.items():
        if key not in _SECTIONS and key not in _TOP_LEVEL:
            raise ConfigError(key, f"unknown key '{key}' at top level")
    parts = {name: _build(name, cls, doc.get(name, {})) for name, cls in _SECTIONS.items()}
    cfg = RunConfig(**parts)
    algorithm = doc.get("algorithm", "mappo_tm")
    cfg = cfg.with_algorithm(algorithm)
    if "seed" in doc:
        seed = doc["seed"]
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            raise ConfigError("seed", "seed must be a non-negative integer")
        cfg = cfg.with_seed(seed)
    return cfg


def load_config(path: str | os.PathLike | None) -> RunConfig:
    if path is None:
        return parse_config("")
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError("", f"cannot read config file {path}: {err}") from None
    return parse_config(text)
