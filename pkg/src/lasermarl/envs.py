"""Multi-agent environment wrappers consumed by the trainer.

Each env exposes the same small surface: ``reset``, ``observations``,
``state``, ``step`` and a few size attributes. The critic sees the state as
``num_uavs`` position/energy triples followed by ``num_sensors`` scalars.
"""

from __future__ import annotations

import numpy as np

from lasermarl import sim
from lasermarl.sim import WorldConfig


class UavEnv:
    """Training view of one world. The sensor layout is fixed by ``config.seed``."""

    def __init__(self, config: WorldConfig):
        self.config = config
        self.num_agents = config.num_uavs
        self.num_uavs = config.num_uavs
        self.num_sensors = config.num_sensors
        self.obs_dim = sim.observation_dim(config)
        self.state_dim = sim.state_dim(config)
        self.n_actions = sim.NUM_ACTIONS
        self.world = sim.init_world(config)
        self.episode_return = 0.0
        self.episode_peak_aoi = 0.0

    def reset(self) -> None:
        self.world = sim.init_world(self.config)
        self.episode_return = 0.0
        self.episode_peak_aoi = 0.0

    def observations(self) -> np.ndarray:
        return sim.observe_all(self.world)

    def state(self) -> np.ndarray:
        return sim.global_state(self.world)

    def step(self, actions) -> tuple[np.ndarray, bool, dict]:
        prev_aoi = self.world.aoi
        _, out = sim.step(self.world, actions)
        self.episode_return += float(np.mean(out.rewards))
        self.episode_peak_aoi = max(self.episode_peak_aoi, float(np.max(prev_aoi)) + self.config.dt_s)
        info = {"episode_return": self.episode_return, "peak_aoi": self.episode_peak_aoi}
        return out.rewards, out.done, info

    def snapshot(self) -> dict:
        from lasermarl.serialization import world_to_dict

        return {
            "world": world_to_dict(self.world),
            "episode_return": self.episode_return,
            "episode_peak_aoi": self.episode_peak_aoi,
        }

    def restore(self, snap: dict) -> None:
        from lasermarl.serialization import world_from_dict

        self.world = world_from_dict(snap["world"])
        self.episode_return = snap["episode_return"]
        self.episode_peak_aoi = snap["episode_peak_aoi"]


class CorridorEnv:
    """Single agent on a line of cells; reaching the right end pays 1 and ends the episode.

    Starts are drawn uniformly from the non-terminal cells. Action 1 moves
    right, action 0 moves left (clamped). Episodes time out after
    ``max_steps`` with no reward.
    """

    num_agents = 1
    num_uavs = 1
    n_actions = 2

    def __init__(self, length: int = 5, max_steps: int = 20, seed: int = 0):
        self.length = length
        self.max_steps = max_steps
        self.num_sensors = length
        self.obs_dim = length
        self.state_dim = 3 + length
        self.rng = np.random.Generator(np.random.PCG64(seed))
        self.pos = 0
        self.t = 0
        self.episode_return = 0.0
        self.reset()

    def reset(self, start: int | None = None) -> None:
        self.pos = int(self.rng.integers(0, self.length - 1)) if start is None else start
        self.t = 0
        self.episode_return = 0.0

    def observations(self) -> np.ndarray:
        obs = np.zeros((1, self.length))
        obs[0, self.pos] = 1.0
        return obs

    def state(self) -> np.ndarray:
        s = np.zeros(self.state_dim)
        s[0] = self.pos / (self.length - 1)
        s[2] = 1.0
        s[3 + self.pos] = 1.0
        return s

    def step(self, actions) -> tuple[np.ndarray, bool, dict]:
        a = int(np.asarray(actions).reshape(-1)[0])
        self.pos = min(self.pos + 1, self.length - 1) if a == 1 else max(self.pos - 1, 0)
        self.t += 1
        r = 1.0 if self.pos == self.length - 1 else 0.0
        done = r > 0 or self.t >= self.max_steps
        self.episode_return += r
        return np.array([r]), done, {"episode_return": self.episode_return, "peak_aoi": 0.0}

    def snapshot(self) -> dict:
        return {"pos": self.pos, "t": self.t, "episode_return": self.episode_return, "rng": self.rng.bit_generator.state}

    def restore(self, snap: dict) -> None:
        self.pos, self.t, self.episode_return = snap["pos"], snap["t"], snap["episode_return"]
        self.rng.bit_generator.state = snap["rng"]
