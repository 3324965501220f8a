"""Actor and critic networks plus the scripted baselines.

The actor is shared by every UAV: an input MLP, an LSTM cell carrying the
per-agent history, and a softmax head over the eight headings. The centralized
critic embeds UAVs and sensors as tokens, runs a per-agent (local) and a
fleet-wide (global) attention head, and blends the two values with a learned
scalar weight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from lasermarl import autograd as ag
from lasermarl.autograd import Tensor
from lasermarl.errors import ArgumentError, NumericError, ShapeError
from lasermarl.sim import NUM_ACTIONS, WorldState, move_uav, observe_all


def orthogonal(rng: np.random.Generator, shape: tuple[int, int], gain: float = 1.0) -> np.ndarray:
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


def _param(data, name: str) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64, order="C"), requires_grad=True, name=name)


def _mlp_params(rng, prefix: str, sizes: list[int], out_gain: float) -> dict[str, Tensor]:
    params = {}
    for k, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        gain = out_gain if k == len(sizes) - 2 else np.sqrt(2.0)
        params[f"{prefix}.w{k}"] = _param(orthogonal(rng, (a, b), gain), f"{prefix}.w{k}")
        params[f"{prefix}.b{k}"] = _param(np.zeros(b), f"{prefix}.b{k}")
    return params


def _mlp(params: dict[str, Tensor], prefix: str, x: Tensor, depth: int) -> Tensor:
    for k in range(depth):
        x = ag.linear(x, params[f"{prefix}.w{k}"], params[f"{prefix}.b{k}"])
        if k < depth - 1:
            x = ag.tanh(x)
    return x


# ----------------------------------------------------------------------------- actor


class Actor:
    """Shared-parameter recurrent policy.

    With ``use_lstm=False`` the LSTM cell is swapped for a plain tanh layer,
    giving the feed-forward actor of vanilla MAPPO.
    """

    def __init__(
        self,
        obs_dim: int,
        n_actions: int = NUM_ACTIONS,
        hidden: int = 64,
        use_lstm: bool = True,
        seed: int = 0,
    ):
        self.obs_dim = obs_dim
        self.n_actions = n_actions
        self.hidden = hidden
        self.use_lstm = use_lstm
        rng = np.random.Generator(np.random.PCG64(seed))
        p = {
            "actor.in.w": _param(orthogonal(rng, (obs_dim, hidden), np.sqrt(2.0)), "actor.in.w"),
            "actor.in.b": _param(np.zeros(hidden), "actor.in.b"),
        }
        if use_lstm:
            U = np.concatenate([orthogonal(rng, (hidden, hidden)) for _ in range(4)], axis=1)
            W = np.concatenate([orthogonal(rng, (hidden, hidden)) for _ in range(4)], axis=1)
            b = np.zeros(4 * hidden)
            b[hidden:2 * hidden] = 1.0  # forget-gate bias
            p["actor.lstm.W"] = _param(W, "actor.lstm.W")
            p["actor.lstm.U"] = _param(U, "actor.lstm.U")
            p["actor.lstm.b"] = _param(b, "actor.lstm.b")
        else:
            p["actor.ff.w"] = _param(orthogonal(rng, (hidden, hidden), np.sqrt(2.0)), "actor.ff.w")
            p["actor.ff.b"] = _param(np.zeros(hidden), "actor.ff.b")
        p["actor.head.w"] = _param(orthogonal(rng, (hidden, n_actions), 0.01), "actor.head.w")
        p["actor.head.b"] = _param(np.zeros(n_actions), "actor.head.b")
        self.params = p

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def initial_hidden(self, batch: int) -> tuple[np.ndarray, np.ndarray]:
        return np.zeros((batch, self.hidden)), np.zeros((batch, self.hidden))

    def logits(self, obs, h, c) -> tuple[Tensor, Tensor, Tensor]:
        """Batched step: obs (B, obs_dim), h/c (B, hidden) -> logits (B, n_actions), h', c'."""
        obs, h, c = ag._as_tensor(obs), ag._as_tensor(h), ag._as_tensor(c)
        if obs.shape[-1] != self.obs_dim:
            raise ShapeError(f"actor expects observations of length {self.obs_dim}, got {obs.shape}")
        p = self.params
        x = ag.tanh(ag.linear(obs, p["actor.in.w"], p["actor.in.b"]))
        if self.use_lstm:
            h, c = ag.lstm_cell(x, h, c, {"W": p["actor.lstm.W"], "U": p["actor.lstm.U"], "b": p["actor.lstm.b"]})
            z = h
        else:
            z = ag.tanh(ag.linear(x, p["actor.ff.w"], p["actor.ff.b"]))
        return ag.linear(z, p["actor.head.w"], p["actor.head.b"]), h, c


def actor_forward(obs, hidden, actor: Actor) -> tuple[np.ndarray, tuple[np.ndarray, np.ndarray]]:
    """Action probabilities for one or a batch of observations."""
    obs = np.asarray(obs, dtype=np.float64)
    single = obs.ndim == 1
    h, c = (np.asarray(v, dtype=np.float64) for v in hidden)
    if single:
        obs, h, c = obs[None], h[None], c[None]
    logits, h2, c2 = actor.logits(obs, h, c)
    probs = ag.softmax(logits).data
    h2, c2 = h2.data, c2.data
    if single:
        return probs[0], (h2[0], c2[0])
    return probs, (h2, c2)


def sample_action(probs, rng: np.random.Generator, greedy: bool = False) -> tuple[int, float]:
    probs = np.asarray(probs, dtype=np.float64)
    if abs(probs.sum() - 1.0) > 1e-9 or np.any(probs < 0):
        raise NumericError(f"probabilities must be a distribution, sum={probs.sum()!r}")
    if greedy:
        a = int(np.argmax(probs))
    else:
        a = int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))
        if a >= len(probs):
            a = int(np.flatnonzero(probs > 0)[-1])
    return a, float(np.log(probs[a]))


def sample_actions(probs: np.ndarray, rng: np.random.Generator, greedy: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise categorical draws; one uniform per row, consumed in row order."""
    sums = probs.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > 1e-9):
        raise NumericError("probabilities must be a distribution in every row")
    if greedy:
        acts = np.argmax(probs, axis=-1)
    else:
        u = rng.random(probs.shape[0])
        acts = (np.cumsum(probs, axis=-1) <= u[:, None]).sum(axis=-1)
        acts = np.minimum(acts, probs.shape[-1] - 1)
        for r in np.flatnonzero(probs[np.arange(len(acts)), acts] == 0.0):
            acts[r] = np.flatnonzero(probs[r] > 0)[-1]
    logp = np.log(probs[np.arange(len(acts)), acts])
    return acts.astype(np.int64), logp


# ----------------------------------------------------------------------------- critics


class DualAttentionCritic:
    """Set-transformer style critic over UAV and sensor tokens.

    Returns per-agent local values, one global value and the blend weight.
    """

    def __init__(self, num_uavs: int, num_sensors: int, embed: int = 32, mlp_hidden: int = 32, seed: int = 0):
        self.num_uavs = num_uavs
        self.num_sensors = num_sensors
        self.embed = embed
        rng = np.random.Generator(np.random.PCG64(seed))
        d = embed
        p = {
            "critic.uav.w": _param(orthogonal(rng, (3, d)), "critic.uav.w"),
            "critic.uav.tag": _param(0.1 * rng.standard_normal(d), "critic.uav.tag"),
            "critic.sensor.w": _param(orthogonal(rng, (1, d)), "critic.sensor.w"),
            "critic.sensor.tag": _param(0.1 * rng.standard_normal(d), "critic.sensor.tag"),
        }
        for head in ("local", "global"):
            for proj in ("q", "k", "v"):
                key = f"critic.{head}.{proj}"
                p[key] = _param(orthogonal(rng, (d, d)), key)
            p.update(_mlp_params(rng, f"critic.{head}.mlp", [d, mlp_hidden, 1], 1.0))
        p["critic.blend"] = _param(np.array(0.0), "critic.blend")
        self.params = p

    @property
    def state_dim(self) -> int:
        return 3 * self.num_uavs + self.num_sensors

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    @property
    def alpha(self) -> float:
        return float(1.0 / (1.0 + np.exp(-self.params["critic.blend"].data)))

    def heads(self, states) -> tuple[Tensor, Tensor, Tensor]:
        """states (B, state_dim) -> V_loc (B, n), V_glob (B, 1), alpha ()."""
        states = ag._as_tensor(states)
        if states.ndim != 2 or states.shape[1] != self.state_dim:
            raise ShapeError(f"critic expects states of shape (B, {self.state_dim}), got {states.shape}")
        p = self.params
        B, n, m = states.shape[0], self.num_uavs, self.num_sensors
        uav_in = ag.reshape(states[:, : 3 * n], (B, n, 3))
        sen_in = ag.reshape(states[:, 3 * n:], (B, m, 1))
        uav_tok = ag.tanh(ag.add(ag.matmul(uav_in, p["critic.uav.w"]), p["critic.uav.tag"]))
        sen_tok = ag.tanh(ag.add(ag.matmul(sen_in, p["critic.sensor.w"]), p["critic.sensor.tag"]))
        tokens = ag.concat([uav_tok, sen_tok], axis=1)

        def attend(head: str, queries: Tensor) -> Tensor:
            q = ag.matmul(queries, p[f"critic.{head}.q"])
            k = ag.matmul(tokens, p[f"critic.{head}.k"])
            v = ag.matmul(tokens, p[f"critic.{head}.v"])
            out = ag.add(ag.scaled_dot_attention(q, k, v), queries)
            return _mlp(p, f"critic.{head}.mlp", out, 2)

        v_loc = ag.reshape(attend("local", uav_tok), (B, n))
        pooled = ag.mean(tokens, axis=1, keepdims=True)
        v_glob = ag.reshape(attend("global", pooled), (B, 1))
        alpha = ag.sigmoid(p["critic.blend"])
        return v_loc, v_glob, alpha

    def values(self, states) -> Tensor:
        v_loc, v_glob, alpha = self.heads(states)
        return ag.add(ag.mul(alpha, v_loc), ag.mul(ag.sub(1.0, alpha), v_glob))


def critic_forward(state, critic: DualAttentionCritic) -> tuple[np.ndarray, float, float]:
    """Single global state -> (V_loc per agent, V_glob, alpha)."""
    v_loc, v_glob, alpha = critic.heads(np.asarray(state, dtype=np.float64)[None])
    return v_loc.data[0], float(v_glob.data[0, 0]), float(alpha.data)


class MLPCritic:
    """Vanilla MAPPO critic: MLP on the global state plus a one-hot agent id."""

    def __init__(self, num_uavs: int, num_sensors: int, hidden: int = 64, seed: int = 0):
        self.num_uavs = num_uavs
        self.num_sensors = num_sensors
        rng = np.random.Generator(np.random.PCG64(seed))
        self.params = _mlp_params(rng, "critic.mlp", [self.state_dim + num_uavs, hidden, hidden, 1], 1.0)
        self._eye = np.eye(num_uavs)

    @property
    def state_dim(self) -> int:
        return 3 * self.num_uavs + self.num_sensors

    @property
    def alpha(self) -> None:
        return None

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def values(self, states) -> Tensor:
        s = np.asarray(states.data if isinstance(states, Tensor) else states, dtype=np.float64)
        if s.ndim != 2 or s.shape[1] != self.state_dim:
            raise ShapeError(f"critic expects states of shape (B, {self.state_dim}), got {s.shape}")
        B, n = s.shape[0], self.num_uavs
        x = np.concatenate([np.repeat(s[:, None, :], n, axis=1), np.broadcast_to(self._eye, (B, n, n))], axis=2)
        return ag.reshape(_mlp(self.params, "critic.mlp", Tensor(x), 3), (B, n))


# ----------------------------------------------------------------------------- baselines


@dataclass(frozen=True)
class ScriptedPolicyConfig:
    energy_return_threshold: float = 0.3
    # Once returning, keep charging until this fraction of capacity.
    resume_threshold: float = 0.9
    target_rule: str = "max-aoi-then-nearest"

    def __post_init__(self):
        if not 0 < self.energy_return_threshold < 1:
            raise ArgumentError("energy_return_threshold must lie in (0,1)")
        if not self.energy_return_threshold <= self.resume_threshold <= 1:
            raise ArgumentError("resume_threshold must lie in [energy_return_threshold, 1]")
        if self.target_rule != "max-aoi-then-nearest":
            raise ArgumentError(f"unknown target rule {self.target_rule!r}")


def step_toward(world: WorldState, agent: int, target) -> int:
    """Heading whose one-step move lands closest to ``target`` (ties -> lowest code)."""
    cfg = world.config
    target = np.asarray(target, dtype=np.float64)
    best, best_d = 0, np.inf
    for a in range(NUM_ACTIONS):
        nxt = move_uav(world.uav_xy[agent], a, cfg)
        d = np.hypot(*(nxt - target))
        if d < best_d:
            best, best_d = a, d
    return best


def pick_target(world: WorldState, agent: int, exclude=()) -> int:
    """Sensor with the largest AoI; ties broken by distance, then index."""
    dist = np.hypot(*(world.sensor_xy - world.uav_xy[agent]).T)
    candidates = [k for k in range(world.config.num_sensors) if k not in exclude]
    if not candidates:
        candidates = list(range(world.config.num_sensors))
    return min(candidates, key=lambda k: (-world.aoi[k], dist[k], k))


def scripted_greedy(world: WorldState, agent: int, config: ScriptedPolicyConfig = ScriptedPolicyConfig(),
                    returning: bool | None = None) -> int:
    """Stateless form of the greedy baseline for one agent.

    ``returning`` overrides the low-energy branch (used by the stateful
    :class:`GreedyPolicy` for its hysteresis).
    """
    cfg = world.config
    if returning is None:
        returning = world.energy[agent] < config.energy_return_threshold * cfg.battery_capacity_j
    if returning:
        return step_toward(world, agent, cfg.station_xy)
    return step_toward(world, agent, world.sensor_xy[pick_target(world, agent)])


class Policy:
    """Acts for every UAV of a world. ``reset`` is called at each episode start."""

    name = "policy"

    def reset(self, world: WorldState, seed: int) -> None:
        pass

    def act(self, world: WorldState) -> np.ndarray:
        raise NotImplementedError


class GreedyPolicy(Policy):
    """Scripted baseline: chase the stalest sensor, fly home when low on energy.

    Lower-indexed UAVs claim their targets first so the fleet spreads out.
    """

    name = "greedy"

    def __init__(self, config: ScriptedPolicyConfig = ScriptedPolicyConfig()):
        self.config = config
        self.returning: np.ndarray | None = None

    def reset(self, world: WorldState, seed: int) -> None:
        self.returning = np.zeros(world.config.num_uavs, dtype=bool)

    def act(self, world: WorldState) -> np.ndarray:
        cfg = world.config
        if self.returning is None or len(self.returning) != cfg.num_uavs:
            self.reset(world, 0)
        frac = world.energy / cfg.battery_capacity_j
        self.returning = np.where(
            self.returning, frac < self.config.resume_threshold, frac < self.config.energy_return_threshold
        )
        actions = np.zeros(cfg.num_uavs, dtype=np.int64)
        claimed: set[int] = set()
        for i in range(cfg.num_uavs):
            if not world.active[i]:
                continue
            if self.returning[i]:
                actions[i] = step_toward(world, i, cfg.station_xy)
            else:
                k = pick_target(world, i, claimed)
                claimed.add(k)
                actions[i] = step_toward(world, i, world.sensor_xy[k])
        return actions


def random_policy(rng: np.random.Generator) -> int:
    return int(rng.integers(0, NUM_ACTIONS))


class RandomPolicy(Policy):
    name = "random"

    def __init__(self):
        self.rng = np.random.Generator(np.random.PCG64(0))

    def reset(self, world: WorldState, seed: int) -> None:
        self.rng = np.random.Generator(np.random.PCG64(seed))

    def act(self, world: WorldState) -> np.ndarray:
        return np.array([random_policy(self.rng) for _ in range(world.config.num_uavs)], dtype=np.int64)


class LearnedPolicy(Policy):
    """Wraps a trained actor; greedy (argmax) by default."""

    def __init__(self, actor: Actor, greedy: bool = True, name: str = "learned"):
        self.actor = actor
        self.greedy = greedy
        self.name = name
        self.rng = np.random.Generator(np.random.PCG64(0))
        self.h = self.c = None

    def reset(self, world: WorldState, seed: int) -> None:
        self.h, self.c = self.actor.initial_hidden(world.config.num_uavs)
        self.rng = np.random.Generator(np.random.PCG64(seed))

    def act(self, world: WorldState) -> np.ndarray:
        if self.h is None:
            self.reset(world, 0)
        probs, (self.h, self.c) = actor_forward(observe_all(world), (self.h, self.c), self.actor)
        actions, _ = sample_actions(probs, self.rng, greedy=self.greedy)
        return actions
