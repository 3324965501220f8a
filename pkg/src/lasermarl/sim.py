"""Discrete-time world model for laser-charged UAV data collection.

The world is a bounded plane holding static ground sensors, a fleet of UAVs
flying at fixed altitude, and one charge station whose laser beam directors
(LBDs) each power at most one UAV inside the charging disk.
"""

from __future__ import annotations

import copy
import dataclasses
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from lasermarl.errors import ArgumentError, ConfigError, StateError

ACTION_NAMES = ("E", "NE", "N", "NW", "W", "SW", "S", "SE")
NUM_ACTIONS = len(ACTION_NAMES)
_INV_SQRT2 = 1.0 / math.sqrt(2.0)
DIRECTIONS = np.array(
    [
        (1.0, 0.0),
        (_INV_SQRT2, _INV_SQRT2),
        (0.0, 1.0),
        (-_INV_SQRT2, _INV_SQRT2),
        (-1.0, 0.0),
        (-_INV_SQRT2, -_INV_SQRT2),
        (0.0, -1.0),
        (_INV_SQRT2, -_INV_SQRT2),
    ]
)


@dataclass(frozen=True)
class WorldConfig:
    width_m: float = 1000.0
    height_m: float = 1000.0
    num_sensors: int = 50
    num_uavs: int = 4
    altitude_m: float = 80.0
    cruise_speed_mps: float = 5.0
    dt_s: float = 4.0
    horizon_steps: int = 500
    comm_range_m: float = 100.0
    station_xy: tuple[float, float] = (500.0, 500.0)
    charge_radius_m: float = 250.0
    num_lbds: int = 10
    laser_tx_power_w: float = 10_000.0
    eta_pv: float = 0.15
    battery_capacity_j: float = 500_000.0
    p_move_w: float = 350.0
    p_hover_w: float = 0.0
    aoi_cap_s: float = 2000.0
    c_collect: float = 0.5
    c_dead: float = 10.0
    seed: int = 0
    # Fixed sensor layout; when None, sensors are drawn uniformly from the seed.
    sensor_positions: tuple[tuple[float, float], ...] | None = None
    initial_energy_j: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "station_xy", tuple(float(v) for v in self.station_xy))
        if self.sensor_positions is not None:
            object.__setattr__(
                self, "sensor_positions", tuple((float(x), float(y)) for x, y in self.sensor_positions)
            )
        self.validate()

    def validate(self) -> None:
        positive = (
            "width_m",
            "height_m",
            "cruise_speed_mps",
            "dt_s",
            "comm_range_m",
            "charge_radius_m",
            "battery_capacity_j",
            "aoi_cap_s",
        )
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(name, f"{name} must be > 0, got {getattr(self, name)}")
        for name in ("num_sensors", "num_uavs", "num_lbds", "horizon_steps"):
            if int(getattr(self, name)) != getattr(self, name):
                raise ConfigError(name, f"{name} must be an integer")
        if self.num_sensors < 1:
            raise ConfigError("num_sensors", "num_sensors must be >= 1")
        if self.num_uavs < 1:
            raise ConfigError("num_uavs", "num_uavs must be >= 1")
        if self.num_lbds < 1:
            raise ConfigError("num_lbds", "num_lbds must be >= 1")
        if self.horizon_steps < 0:
            raise ConfigError("horizon_steps", "horizon_steps must be >= 0")
        if not 0.0 < self.eta_pv <= 1.0:
            raise ConfigError("eta_pv", "eta_pv must lie in (0,1]")
        for name in ("altitude_m", "laser_tx_power_w", "p_move_w", "p_hover_w", "c_collect", "c_dead"):
            if getattr(self, name) < 0:
                raise ConfigError(name, f"{name} must be >= 0")
        if len(self.station_xy) != 2:
            raise ConfigError("station_xy", "station_xy must have two coordinates")
        sx, sy = self.station_xy
        if not (0 <= sx <= self.width_m and 0 <= sy <= self.height_m):
            raise ConfigError("station_xy", "station_xy must lie inside the area")
        if self.sensor_positions is not None:
            if len(self.sensor_positions) != self.num_sensors:
                raise ConfigError("sensor_positions", "sensor_positions must list num_sensors points")
            for x, y in self.sensor_positions:
                if not (0 <= x <= self.width_m and 0 <= y <= self.height_m):
                    raise ConfigError("sensor_positions", f"sensor ({x}, {y}) lies outside the area")
        if self.initial_energy_j is not None and not 0 <= self.initial_energy_j <= self.battery_capacity_j:
            raise ConfigError("initial_energy_j", "initial_energy_j must lie in [0, battery_capacity_j]")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed", "seed must be a 64-bit unsigned integer")

    def replace(self, **changes) -> "WorldConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["station_xy"] = list(self.station_xy)
        if self.sensor_positions is not None:
            d["sensor_positions"] = [list(p) for p in self.sensor_positions]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "WorldConfig":
        d = dict(d)
        if "station_xy" in d:
            d["station_xy"] = tuple(d["station_xy"])
        if d.get("sensor_positions") is not None:
            d["sensor_positions"] = tuple(tuple(p) for p in d["sensor_positions"])
        return cls(**d)


class UavState(NamedTuple):
    xy: tuple[float, float]
    energy_j: float
    active: bool
    charging_lbd: int | None


class SensorState(NamedTuple):
    xy: tuple[float, float]
    aoi_s: float


@dataclass
class WorldState:
    """Simulation truth. Per-entity fields are stored column-wise as arrays."""

    config: WorldConfig
    uav_xy: np.ndarray  # (num_uavs, 2)
    energy: np.ndarray  # (num_uavs,)
    active: np.ndarray  # (num_uavs,) bool
    charging_lbd: np.ndarray  # (num_uavs,) int, -1 when not charging
    sensor_xy: np.ndarray  # (num_sensors, 2)
    aoi: np.ndarray  # (num_sensors,)
    lbd_busy: np.ndarray  # (num_lbds,) bool
    step: int = 0
    rng_state: dict = field(default_factory=dict)

    @property
    def done(self) -> bool:
        return self.step >= self.config.horizon_steps

    @property
    def uavs(self) -> list[UavState]:
        return [
            UavState(
                (float(self.uav_xy[i, 0]), float(self.uav_xy[i, 1])),
                float(self.energy[i]),
                bool(self.active[i]),
                None if self.charging_lbd[i] < 0 else int(self.charging_lbd[i]),
            )
            for i in range(len(self.energy))
        ]

    @property
    def sensors(self) -> list[SensorState]:
        return [
            SensorState((float(x), float(y)), float(a)) for (x, y), a in zip(self.sensor_xy, self.aoi)
        ]

    def copy(self) -> "WorldState":
        return WorldState(
            config=self.config,
            uav_xy=self.uav_xy.copy(),
            energy=self.energy.copy(),
            active=self.active.copy(),
            charging_lbd=self.charging_lbd.copy(),
            sensor_xy=self.sensor_xy,
            aoi=self.aoi.copy(),
            lbd_busy=self.lbd_busy.copy(),
            step=self.step,
            rng_state=copy.deepcopy(self.rng_state),
        )

    def equals(self, other: "WorldState") -> bool:
        """Bit-exact equality of every field."""
        return (
            self.config == other.config
            and self.step == other.step
            and self.rng_state == other.rng_state
            and all(
                np.array_equal(getattr(self, n), getattr(other, n))
                for n in ("uav_xy", "energy", "active", "charging_lbd", "sensor_xy", "aoi", "lbd_busy")
            )
        )


@dataclass
class StepOutcome:
    rewards: np.ndarray  # per-agent training reward = team + local
    team_reward: float
    local_rewards: np.ndarray
    collections: list[tuple[int, int]]
    charged_j: np.ndarray
    consumed_j: np.ndarray
    depleted: list[int]
    done: bool


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def init_world(config: WorldConfig) -> WorldState:
    config.validate()
    rng = make_rng(config.seed)
    if config.sensor_positions is not None:
        sensor_xy = np.array(config.sensor_positions, dtype=np.float64)
    else:
        sensor_xy = rng.uniform(0.0, 1.0, size=(config.num_sensors, 2)) * np.array(
            [config.width_m, config.height_m]
        )
    n = config.num_uavs
    start_energy = config.battery_capacity_j if config.initial_energy_j is None else config.initial_energy_j
    world = WorldState(
        config=config,
        uav_xy=np.tile(np.array(config.station_xy, dtype=np.float64), (n, 1)),
        energy=np.full(n, float(start_energy)),
        active=np.full(n, start_energy > 0),
        charging_lbd=np.full(n, -1, dtype=np.int64),
        sensor_xy=sensor_xy,
        aoi=np.zeros(config.num_sensors),
        lbd_busy=np.zeros(config.num_lbds, dtype=bool),
        step=0,
        rng_state=rng.bit_generator.state,
    )
    return world


def move_uav(xy, action: int, config: WorldConfig) -> np.ndarray:
    if not 0 <= int(action) < NUM_ACTIONS or int(action) != action:
        raise ArgumentError(f"action must be an integer in 0..7, got {action!r}")
    d = config.cruise_speed_mps * config.dt_s
    out = np.asarray(xy, dtype=np.float64) + d * DIRECTIONS[int(action)]
    out[0] = min(max(out[0], 0.0), config.width_m)
    out[1] = min(max(out[1], 0.0), config.height_m)
    return out


def station_distance(world: WorldState) -> np.ndarray:
    delta = world.uav_xy - np.asarray(world.config.station_xy)
    return np.hypot(delta[:, 0], delta[:, 1])


def assign_lbds(world: WorldState) -> None:
    """Release every beam, then hand them out lowest-energy-first inside the zone."""
    cfg = world.config
    world.lbd_busy[:] = False
    world.charging_lbd[:] = -1
    eligible = np.flatnonzero(world.active & (station_distance(world) <= cfg.charge_radius_m))
    # lexsort: last key is primary
    order = eligible[np.lexsort((eligible, world.energy[eligible]))]
    for lbd, uav in enumerate(order[: cfg.num_lbds]):
        world.lbd_busy[lbd] = True
        world.charging_lbd[uav] = lbd


def _validate_actions(world: WorldState, joint_action) -> np.ndarray:
    acts = np.asarray(joint_action)
    if acts.shape != (world.config.num_uavs,):
        raise ArgumentError(f"joint action needs {world.config.num_uavs} entries, got shape {acts.shape}")
    if not np.issubdtype(acts.dtype, np.integer):
        if not np.all(np.mod(acts, 1) == 0):
            raise ArgumentError("joint action codes must be integers")
        acts = acts.astype(np.int64)
    if np.any((acts < 0) | (acts >= NUM_ACTIONS)):
        raise ArgumentError(f"joint action codes must lie in 0..7, got {acts.tolist()}")
    return acts


def step(world: WorldState, joint_action) -> tuple[WorldState, StepOutcome]:
    """Advance one decision step in place and return ``(world, outcome)``."""
    if world.done:
        raise StateError(f"world is done at step {world.step}; reset before stepping")
    acts = _validate_actions(world, joint_action)
    cfg = world.config
    was_active = world.active.copy()

    # (1) motion
    for i in np.flatnonzero(was_active):
        world.uav_xy[i] = move_uav(world.uav_xy[i], int(acts[i]), cfg)

    # (2) consumption
    consumed = np.where(was_active, cfg.p_move_w * cfg.dt_s, 0.0)

    # (3) charging
    assign_lbds(world)
    holders = world.charging_lbd >= 0
    charged = np.where(holders, cfg.eta_pv * cfg.laser_tx_power_w * cfg.dt_s, 0.0)

    # (4) energy update, depletion is absorbing
    world.energy = np.clip(world.energy - consumed + charged, 0.0, cfg.battery_capacity_j)
    depleted = np.flatnonzero(was_active & (world.energy <= 0.0))
    if depleted.size:
        world.active[depleted] = False
        # depleted UAVs can never hold a beam
        for i in depleted:
            if world.charging_lbd[i] >= 0:
                world.lbd_busy[world.charging_lbd[i]] = False
                world.charging_lbd[i] = -1

    # (5) collection
    collections: list[tuple[int, int]] = []
    collected = np.zeros(cfg.num_sensors, dtype=bool)
    for i in np.flatnonzero(world.active):
        delta = world.sensor_xy - world.uav_xy[i]
        in_range = np.flatnonzero(np.hypot(delta[:, 0], delta[:, 1]) <= cfg.comm_range_m)
        collected[in_range] = True
        collections.extend((int(i), int(k)) for k in in_range)
    world.aoi = np.where(collected, 0.0, world.aoi + cfg.dt_s)

    # (6) rewards
    team, local = reward(world, collections, depleted.tolist())

    # (7) clock
    world.step += 1
    outcome = StepOutcome(
        rewards=team + local,
        team_reward=team,
        local_rewards=local,
        collections=collections,
        charged_j=charged,
        consumed_j=consumed,
        depleted=[int(i) for i in depleted],
        done=world.done,
    )
    return world, outcome


def reward(world: WorldState, collections: Sequence[tuple[int, int]], depleted: Sequence[int]):
    """Shared team reward plus per-agent depletion penalties."""
    cfg = world.config
    team = -float(np.mean(world.aoi / cfg.aoi_cap_s)) + cfg.c_collect * len(collections) / cfg.num_sensors
    local = np.zeros(cfg.num_uavs)
    for i in depleted:
        local[i] = -cfg.c_dead
    return team, local


def observation_dim(config: WorldConfig) -> int:
    return 5 + config.num_sensors


def state_dim(config: WorldConfig) -> int:
    return 3 * config.num_uavs + config.num_sensors


def observe(world: WorldState, agent: int) -> np.ndarray:
    """Local view: own position/energy, range-masked sensor AoI, station offset."""
    cfg = world.config
    if not 0 <= agent < cfg.num_uavs:
        raise ArgumentError(f"agent index {agent} out of range for {cfg.num_uavs} UAVs")
    x, y = world.uav_xy[agent]
    delta = world.sensor_xy - world.uav_xy[agent]
    in_range = np.hypot(delta[:, 0], delta[:, 1]) <= cfg.comm_range_m
    masked = np.where(in_range, np.clip(world.aoi / cfg.aoi_cap_s, 0.0, 1.0), -1.0)
    sx, sy = cfg.station_xy
    out = np.empty(5 + cfg.num_sensors)
    out[0] = x / cfg.width_m
    out[1] = y / cfg.height_m
    out[2] = world.energy[agent] / cfg.battery_capacity_j
    out[3:3 + cfg.num_sensors] = masked
    out[-2] = (sx - x) / cfg.width_m
    out[-1] = (sy - y) / cfg.height_m
    return out


def observe_all(world: WorldState) -> np.ndarray:
    return np.stack([observe(world, i) for i in range(world.config.num_uavs)])


def global_state(world: WorldState) -> np.ndarray:
    cfg = world.config
    uav = np.column_stack(
        [
            world.uav_xy[:, 0] / cfg.width_m,
            world.uav_xy[:, 1] / cfg.height_m,
            world.energy / cfg.battery_capacity_j,
        ]
    )
    return np.concatenate([uav.reshape(-1), np.clip(world.aoi / cfg.aoi_cap_s, 0.0, 1.0)])
