"""Episode logs, AoI metrics, trajectory export, efficiency sweeps and the brute-force oracle."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import spearmanr

from lasermarl import sim
from lasermarl.errors import ArgumentError, ConfigError
from lasermarl.serialization import config_hash
from lasermarl.sim import NUM_ACTIONS, WorldConfig

TRAJECTORY_HEADER = ("step", "uav_id", "x", "y", "energy_j", "charging", "collected_ids")


@dataclass
class StepRecord:
    step: int
    uav_xy: np.ndarray  # (n, 2) after the step
    energy: np.ndarray
    active: np.ndarray
    charging: np.ndarray  # bool, LBD held during the step
    aoi: np.ndarray  # after the step
    aoi_reached: np.ndarray  # age each sensor reached during the step (before any reset)
    collections: list[tuple[int, int]]
    team_reward: float
    rewards: np.ndarray


@dataclass
class EpisodeLog:
    config: WorldConfig
    steps: list[StepRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def total_reward(self) -> float:
        """Episode return averaged over agents (team reward plus each agent's penalty)."""
        return float(sum(np.mean(s.rewards) for s in self.steps))

    @property
    def team_return(self) -> float:
        return float(sum(s.team_reward for s in self.steps))

    @property
    def mean_aoi(self) -> float:
        return float(np.mean([s.aoi.mean() for s in self.steps])) if self.steps else 0.0

    @property
    def depletions(self) -> int:
        if not self.steps:
            return 0
        return int(np.sum(~self.steps[-1].active))


def run_episode(policy, config: WorldConfig, seed: int = 0, world: sim.WorldState | None = None) -> EpisodeLog:
    """Roll ``policy`` from a fresh world until the horizon."""
    world = sim.init_world(config) if world is None else world
    policy.reset(world, seed)
    ep = EpisodeLog(config)
    while not world.done:
        actions = policy.act(world)
        prev = world.aoi.copy()
        _, out = sim.step(world, actions)
        ep.steps.append(
            StepRecord(
                step=world.step,
                uav_xy=world.uav_xy.copy(),
                energy=world.energy.copy(),
                active=world.active.copy(),
                charging=out.charged_j > 0,
                aoi=world.aoi.copy(),
                aoi_reached=prev + config.dt_s,
                collections=list(out.collections),
                team_reward=out.team_reward,
                rewards=out.rewards.copy(),
            )
        )
    return ep


def peak_aoi(log: EpisodeLog) -> float:
    """Largest age any sensor reached during the episode, in seconds."""
    if not log.steps:
        raise ArgumentError("peak_aoi needs a non-empty episode log")
    return float(max(np.max(s.aoi_reached) for s in log.steps))


# ----------------------------------------------------------------------------- trajectories


def trajectory_rows(log: EpisodeLog):
    for s in log.steps:
        per_uav: dict[int, list[int]] = {}
        for i, k in s.collections:
            per_uav.setdefault(i, []).append(k)
        for i in range(len(s.energy)):
            yield (
                s.step,
                i,
                repr(float(s.uav_xy[i, 0])),
                repr(float(s.uav_xy[i, 1])),
                repr(float(s.energy[i])),
                int(bool(s.charging[i])),
                ";".join(str(k) for k in per_uav.get(i, [])),
            )


def export_trajectory(log: EpisodeLog, path=None) -> str:
    """CSV text with one row per (step, UAV); written to ``path`` when given."""
    if not log.steps:
        raise ArgumentError("cannot export an empty episode log")
    buf = io.StringIO()
    buf.write(f"# config_hash={config_hash(log.config)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRAJECTORY_HEADER)
    writer.writerows(trajectory_rows(log))
    text = buf.getvalue()
    if path is not None:
        try:
            Path(path).write_text(text)
        except OSError as err:
            raise OSError(f"cannot write trajectory to {path}: {err}") from err
    return text


def read_trajectory(text: str) -> list[dict]:
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    rows = []
    for r in csv.DictReader(lines):
        rows.append(
            {
                "step": int(r["step"]),
                "uav_id": int(r["uav_id"]),
                "x": float(r["x"]),
                "y": float(r["y"]),
                "energy_j": float(r["energy_j"]),
                "charging": int(r["charging"]),
                "collected_ids": [int(k) for k in r["collected_ids"].split(";") if k],
            }
        )
    return rows


def charging_runs(log: EpisodeLog, agent: int) -> list[int]:
    """Lengths of maximal runs of consecutive charging steps for one UAV."""
    runs, cur = [], 0
    for s in log.steps:
        if s.charging[agent]:
            cur += 1
        elif cur:
            runs.append(cur)
            cur = 0
    if cur:
        runs.append(cur)
    return runs


# ----------------------------------------------------------------------------- sweeps


@dataclass
class SweepResult:
    etas: list[float]
    peak_aoi: list[list[float]]  # per eta, per seed
    median_peak_aoi: list[float]
    seeds: list[int]
    policy: str = ""

    @property
    def spearman(self) -> float:
        return trend_statistic(self.etas, self.median_peak_aoi)

    def to_dict(self) -> dict:
        return {
            "policy": self.policy,
            "seeds": self.seeds,
            "etas": self.etas,
            "peak_aoi": self.peak_aoi,
            "median_peak_aoi": self.median_peak_aoi,
            "spearman": self.spearman,
        }

    def to_json(self, path=None, header_hash: str | None = None) -> str:
        d = self.to_dict()
        if header_hash is not None:
            d["config_hash"] = header_hash
        text = json.dumps(d, indent=1)
        if path is not None:
            Path(path).write_text(text)
        return text


def trend_statistic(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Spearman rank correlation; a constant series has no trend and scores 0."""
    if len(set(ys)) < 2 or len(set(xs)) < 2:
        return 0.0
    return float(spearmanr(xs, ys).statistic)


def efficiency_sweep(policy, etas: Sequence[float], seeds: Sequence[int], world_config: WorldConfig) -> SweepResult:
    from lasermarl.trainer import evaluate

    etas = [float(e) for e in etas]
    for e in etas:
        if not 0 < e <= 1:
            raise ConfigError("eta_pv", "eta_pv must lie in (0,1]")
    if any(b <= a for a, b in zip(etas, etas[1:])):
        raise ConfigError("etas", "etas must be strictly increasing")
    per_eta, medians = [], []
    for e in etas:
        res = evaluate(policy, world_config.replace(eta_pv=e), seeds)
        per_eta.append(res.peak_aoi)
        medians.append(float(np.median(res.peak_aoi)))
    return SweepResult(etas, per_eta, medians, [int(s) for s in seeds], getattr(policy, "name", ""))


# ----------------------------------------------------------------------------- oracle


def scaled_preset(seed: int = 0) -> WorldConfig:
    """Quarter-area world for desk-scale training: 500 m square, 10 sensors, 2 UAVs.

    The charge radius shrinks with the side length so the charging disc keeps
    the same share of the area as in the default world.
    """
    return WorldConfig(
        width_m=500.0,
        height_m=500.0,
        num_sensors=10,
        num_uavs=2,
        station_xy=(250.0, 250.0),
        charge_radius_m=125.0,
        seed=seed,
    )


def tiny_preset() -> WorldConfig:
    """3x3 lattice (20 m spacing), one UAV starting at a corner, two sensors, six steps."""
    return WorldConfig(
        width_m=40.0,
        height_m=40.0,
        num_sensors=2,
        num_uavs=1,
        horizon_steps=6,
        comm_range_m=5.0,
        station_xy=(0.0, 0.0),
        charge_radius_m=10.0,
        num_lbds=1,
        aoi_cap_s=24.0,
        sensor_positions=((40.0, 0.0), (40.0, 40.0)),
    )


def brute_force_oracle(config: WorldConfig, horizon: int | None = None, limit: int = 10**7):
    """Exhaustively search every action sequence of a single-UAV world.

    Returns ``(best undiscounted team return, lexicographically smallest
    maximizing sequence)``. Sequences sharing a prefix share its simulation.
    """
    horizon = config.horizon_steps if horizon is None else horizon
    if config.num_uavs != 1:
        raise ArgumentError("brute_force_oracle needs a single-UAV world")
    if NUM_ACTIONS ** horizon > limit:
        raise ArgumentError(f"8^{horizon} sequences exceed the search bound {limit}")
    cfg = config.replace(horizon_steps=horizon)
    root = sim.init_world(cfg)
    best = [-np.inf, ()]
    seq: list[int] = []

    def search(world: sim.WorldState, acc: float) -> None:
        if world.done:
            if acc > best[0]:
                best[0], best[1] = acc, tuple(seq)
            return
        for a in range(NUM_ACTIONS):
            child = world.copy()
            _, out = sim.step(child, [a])
            seq.append(a)
            search(child, acc + out.team_reward)
            seq.pop()

    search(root, 0.0)
    return float(best[0]), list(best[1])


def replay_return(config: WorldConfig, actions: Sequence[int]) -> float:
    """Undiscounted team return of a fixed single-UAV action sequence from a fresh world."""
    world = sim.init_world(config.replace(horizon_steps=len(actions)))
    total = 0.0
    for a in actions:
        _, out = sim.step(world, [a])
        total += out.team_reward
    return total
