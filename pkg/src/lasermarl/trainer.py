"""MAPPO-TM training: recurrent rollouts, GAE, clipped PPO with chunked BPTT.

Turning off ``use_lstm`` and ``use_dual_attention`` gives vanilla MAPPO
(feed-forward actor, MLP critic on the global state).
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from lasermarl import autograd as ag
from lasermarl.autograd import Adam, Tape, Tensor
from lasermarl.envs import UavEnv
from lasermarl.errors import ArgumentError, CompatibilityError, ConfigError, NumericError, ShapeError
from lasermarl.metrics import EpisodeLog, peak_aoi, run_episode
from lasermarl.policies import Actor, DualAttentionCritic, LearnedPolicy, MLPCritic, Policy, sample_actions
from lasermarl.serialization import (
    assign_params,
    config_hash,
    decode_array,
    encode_array,
    load_params,
    save_params,
)
from lasermarl.sim import WorldConfig

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    ppo_epochs: int = 4
    chunk_len: int = 16
    minibatch_chunks: int = 16
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    lr: float = 3e-4
    grad_clip_norm: float = 0.5
    rollout_len: int = 128
    num_parallel_envs: int = 8
    total_env_steps: int = 200_000
    eval_every: int = 20
    seed: int = 0
    use_lstm: bool = True
    use_dual_attention: bool = True
    actor_hidden: int = 64
    critic_embed: int = 32
    value_norm: bool = True

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ConfigError("gamma", "gamma must lie in (0,1]")
        if not 0 <= self.gae_lambda <= 1:
            raise ConfigError("gae_lambda", "gae_lambda must lie in [0,1]")
        if not self.clip_eps > 0:
            raise ConfigError("clip_eps", "clip_eps must be > 0")
        for name in ("ppo_epochs", "chunk_len", "minibatch_chunks", "rollout_len", "num_parallel_envs", "eval_every"):
            if getattr(self, name) < 1:
                raise ConfigError(name, f"{name} must be >= 1")
        if self.rollout_len % self.chunk_len:
            raise ConfigError("chunk_len", "chunk_len must divide rollout_len")
        if self.lr < 0:
            raise ConfigError("lr", "lr must be >= 0")
        if self.total_env_steps < 0:
            raise ConfigError("total_env_steps", "total_env_steps must be >= 0")

    @property
    def algorithm(self) -> str:
        if self.use_lstm and self.use_dual_attention:
            return "mappo_tm"
        if not self.use_lstm and not self.use_dual_attention:
            return "mappo"
        return "mappo_" + ("lstm" if self.use_lstm else "attn")

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class RolloutBuffer:
    obs: np.ndarray  # (T, E, n, obs_dim)
    actions: np.ndarray  # (T, E, n)
    log_probs: np.ndarray  # (T, E, n)
    rewards: np.ndarray  # (T, E, n)
    values: np.ndarray  # (T, E, n) blended critic values, denormalized
    dones: np.ndarray  # (T, E, n) episode ended after step t
    states: np.ndarray  # (T, E, state_dim)
    hidden_h: np.ndarray  # (T // chunk_len, E, n, H) actor input hidden at chunk starts
    hidden_c: np.ndarray
    bootstrap_values: np.ndarray  # (E, n)
    chunk_len: int
    episode_returns: list[float] = field(default_factory=list)
    episode_peak_aoi: list[float] = field(default_factory=list)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.actions.shape


@dataclass
class TrainLogRecord:
    env_steps: int
    update: int
    mean_episode_reward: float | None
    policy_loss: float
    value_loss: float
    entropy: float
    clip_fraction: float
    alpha: float | None
    wall_clock: float
    episode_rewards: list[float] = field(default_factory=list)
    eval: dict | None = None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


class ValueNorm:
    """Running mean/variance of value targets (critic regresses normalized returns)."""

    def __init__(self, beta: float = 0.99999, eps: float = 1e-5):
        self.beta = beta
        self.eps = eps
        self.mean = 0.0
        self.mean_sq = 0.0
        self.debias = 0.0

    def update(self, x: np.ndarray) -> None:
        b = self.beta
        self.mean = b * self.mean + (1 - b) * float(np.mean(x))
        self.mean_sq = b * self.mean_sq + (1 - b) * float(np.mean(x * x))
        self.debias = b * self.debias + (1 - b)

    def stats(self) -> tuple[float, float]:
        if self.debias == 0.0:
            return 0.0, 1.0
        mu = self.mean / max(self.debias, self.eps)
        var = self.mean_sq / max(self.debias, self.eps) - mu * mu
        return mu, math.sqrt(max(var, 1e-2))

    def normalize(self, x):
        mu, sd = self.stats()
        return (x - mu) / sd

    def denormalize(self, x):
        mu, sd = self.stats()
        return x * sd + mu

    def state_dict(self) -> dict:
        return {"mean": self.mean, "mean_sq": self.mean_sq, "debias": self.debias}

    def load_state_dict(self, d: dict) -> None:
        self.mean, self.mean_sq, self.debias = d["mean"], d["mean_sq"], d["debias"]


class IdentityNorm(ValueNorm):
    def update(self, x):
        pass

    def stats(self):
        return 0.0, 1.0


# ----------------------------------------------------------------------------- networks


def build_networks(env, config: TrainConfig) -> tuple[Actor, DualAttentionCritic | MLPCritic]:
    actor = Actor(env.obs_dim, env.n_actions, hidden=config.actor_hidden, use_lstm=config.use_lstm, seed=config.seed)
    if config.use_dual_attention:
        critic = DualAttentionCritic(env.num_uavs, env.num_sensors, embed=config.critic_embed, seed=config.seed + 1)
    else:
        critic = MLPCritic(env.num_uavs, env.num_sensors, seed=config.seed + 1)
    return actor, critic


# ----------------------------------------------------------------------------- advantage estimation


def compute_gae(rewards, values, dones, bootstrap_value, gamma: float, lam: float):
    """Generalized advantage estimates along axis 0.

    ``dones[t]`` marks that the episode ended after step t; the recursion is
    cut there. Returns unnormalized ``(advantages, returns)``.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    if rewards.shape != values.shape or rewards.shape != dones.shape:
        raise ShapeError(f"gae: rewards {rewards.shape}, values {values.shape}, dones {dones.shape} differ")
    bootstrap_value = np.broadcast_to(np.asarray(bootstrap_value, dtype=np.float64), rewards.shape[1:])
    adv = np.zeros_like(rewards)
    next_adv = np.zeros(rewards.shape[1:])
    next_value = bootstrap_value
    for t in range(rewards.shape[0] - 1, -1, -1):
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * live * next_value - values[t]
        next_adv = delta + gamma * lam * live * next_adv
        adv[t] = next_adv
        next_value = values[t]
    return adv, adv + values


def normalize_advantages(adv: np.ndarray, eps: float = 1e-8) -> np.ndarray:
    if adv.size < 2:
        return adv - adv.mean()
    return (adv - adv.mean()) / (adv.std() + eps)


# ----------------------------------------------------------------------------- rollout


class RolloutState:
    """Per-env recurrent state carried between rollouts."""

    def __init__(self, envs: Sequence, actor: Actor):
        n = envs[0].num_agents
        self.h = np.zeros((len(envs), n, actor.hidden))
        self.c = np.zeros((len(envs), n, actor.hidden))


def collect_rollout(envs: Sequence, actor: Actor, critic, rng: np.random.Generator, state: RolloutState,
                    rollout_len: int, chunk_len: int, value_norm: ValueNorm | None = None) -> RolloutBuffer:
    if rollout_len % chunk_len:
        raise ArgumentError("chunk_len must divide rollout_len")
    value_norm = value_norm or IdentityNorm()
    E, n = len(envs), envs[0].num_agents
    T, H = rollout_len, actor.hidden
    buf = RolloutBuffer(
        obs=np.zeros((T, E, n, envs[0].obs_dim)),
        actions=np.zeros((T, E, n), dtype=np.int64),
        log_probs=np.zeros((T, E, n)),
        rewards=np.zeros((T, E, n)),
        values=np.zeros((T, E, n)),
        dones=np.zeros((T, E, n)),
        states=np.zeros((T, E, envs[0].state_dim)),
        hidden_h=np.zeros((T // chunk_len, E, n, H)),
        hidden_c=np.zeros((T // chunk_len, E, n, H)),
        bootstrap_values=np.zeros((E, n)),
        chunk_len=chunk_len,
    )
    for t in range(T):
        if t % chunk_len == 0:
            buf.hidden_h[t // chunk_len] = state.h
            buf.hidden_c[t // chunk_len] = state.c
        obs = np.stack([env.observations() for env in envs])
        states = np.stack([env.state() for env in envs])
        logits, h, c = actor.logits(obs.reshape(E * n, -1), state.h.reshape(E * n, H), state.c.reshape(E * n, H))
        probs = ag.softmax(logits).data
        actions, logp = sample_actions(probs, rng)
        values = value_norm.denormalize(critic.values(states).data)
        state.h = h.data.reshape(E, n, H)
        state.c = c.data.reshape(E, n, H)
        actions = actions.reshape(E, n)
        buf.obs[t], buf.states[t], buf.actions[t] = obs, states, actions
        buf.log_probs[t], buf.values[t] = logp.reshape(E, n), values
        for e, env in enumerate(envs):
            rewards, done, info = env.step(actions[e])
            buf.rewards[t, e] = rewards
            if done:
                buf.dones[t, e] = 1.0
                buf.episode_returns.append(info["episode_return"])
                buf.episode_peak_aoi.append(info["peak_aoi"])
                env.reset()
                state.h[e] = 0.0
                state.c[e] = 0.0
    final_states = np.stack([env.state() for env in envs])
    buf.bootstrap_values = value_norm.denormalize(critic.values(final_states).data)
    return buf


# ----------------------------------------------------------------------------- PPO update


def _recurrent_log_probs(actor: Actor, obs, actions, resets, h0, c0):
    """Re-unroll the actor over (L, B) sequences; returns (log_probs, entropy) tensors of shape (L*B,)."""
    L, B = actions.shape
    h, c = Tensor(h0), Tensor(c0)
    outs = []
    for t in range(L):
        if t > 0 and resets[t].any():
            keep = (1.0 - resets[t])[:, None]
            h, c = ag.mul(h, keep), ag.mul(c, keep)
        p = actor.params
        x = ag.tanh(ag.linear(Tensor(obs[t]), p["actor.in.w"], p["actor.in.b"]))
        if actor.use_lstm:
            h, c = ag.lstm_cell(x, h, c, {"W": p["actor.lstm.W"], "U": p["actor.lstm.U"], "b": p["actor.lstm.b"]})
            outs.append(h)
        else:
            outs.append(ag.tanh(ag.linear(x, p["actor.ff.w"], p["actor.ff.b"])))
    z = ag.concat(outs, axis=0)
    logits = ag.linear(z, actor.params["actor.head.w"], actor.params["actor.head.b"])
    logp_all = ag.log_softmax(logits)
    onehot = np.zeros(logits.shape)
    onehot[np.arange(L * B), actions.reshape(-1)] = 1.0
    logp = ag.sum_(ag.mul(logp_all, onehot), axis=-1)
    return logp, _entropy(logp_all)


def _entropy(logp_all: Tensor) -> Tensor:
    p = ag.exp(logp_all)
    return ag.mul(ag.sum_(ag.mul(p, logp_all), axis=-1), -1.0)


class PPOTrainer:
    """Owns networks, optimizers, envs and the recurrent rollout state."""

    def __init__(self, envs: Sequence, config: TrainConfig):
        self.envs = list(envs)
        self.config = config
        self.actor, self.critic = build_networks(self.envs[0], config)
        self.actor_opt = Adam(self.actor.parameters(), lr=config.lr, clip_norm=config.grad_clip_norm)
        self.critic_opt = Adam(self.critic.parameters(), lr=config.lr, clip_norm=config.grad_clip_norm)
        self.value_norm = ValueNorm() if config.value_norm else IdentityNorm()
        self.rng = np.random.Generator(np.random.PCG64(config.seed))
        self.rollout_state = RolloutState(self.envs, self.actor)
        self.env_steps = 0
        self.updates = 0

    def collect(self) -> RolloutBuffer:
        c = self.config
        buf = collect_rollout(self.envs, self.actor, self.critic, self.rng, self.rollout_state,
                              c.rollout_len, c.chunk_len, self.value_norm)
        self.env_steps += c.rollout_len * len(self.envs)
        return buf

    def update(self, buf: RolloutBuffer, on_first_minibatch: Callable | None = None) -> TrainLogRecord:
        return ppo_update(self, buf, on_first_minibatch)


def ppo_update(trainer: PPOTrainer, buf: RolloutBuffer, on_first_minibatch: Callable | None = None) -> TrainLogRecord:
    c = trainer.config
    actor, critic = trainer.actor, trainer.critic
    T, E, n = buf.shape
    L = buf.chunk_len
    adv, returns = compute_gae(buf.rewards, buf.values, buf.dones, buf.bootstrap_values, c.gamma, c.gae_lambda)
    adv = normalize_advantages(adv)
    trainer.value_norm.update(returns)
    ret_norm = trainer.value_norm.normalize(returns)
    # resets[t] = hidden zeroed before step t
    resets = np.zeros((T, E, n))
    resets[1:] = buf.dones[:-1]

    n_chunks = T // L
    units = [(k, e) for k in range(n_chunks) for e in range(E)]
    mb_size = min(c.minibatch_chunks, len(units))
    stats = {"policy_loss": [], "value_loss": [], "entropy": [], "clip_fraction": []}
    first = True
    for _ in range(c.ppo_epochs):
        order = trainer.rng.permutation(len(units))
        for start in range(0, len(units), mb_size):
            idx = [units[j] for j in order[start:start + mb_size]]
            ks = np.array([k for k, _ in idx])
            es = np.array([e for _, e in idx])
            tt = ks[None, :] * L + np.arange(L)[:, None]  # (L, U)
            U = len(idx)
            obs = buf.obs[tt, es[None, :]].reshape(L, U * n, -1)
            acts = buf.actions[tt, es[None, :]].reshape(L, U * n)
            old_logp = buf.log_probs[tt, es[None, :]].reshape(-1)
            a_mb = adv[tt, es[None, :]].reshape(-1)
            r_mb = ret_norm[tt, es[None, :]].reshape(L * U, n)
            rs = resets[tt, es[None, :]].reshape(L, U * n)
            h0 = buf.hidden_h[ks, es].reshape(U * n, -1)
            c0 = buf.hidden_c[ks, es].reshape(U * n, -1)
            st = buf.states[tt, es[None, :]].reshape(L * U, -1)

            actor_params = actor.parameters()
            critic_params = critic.parameters()
            for p in actor_params + critic_params:
                p.grad = None
            with Tape() as tape:
                logp, entropy = _recurrent_log_probs(actor, obs, acts, rs, h0, c0)
                ratio = ag.exp(ag.sub(logp, old_logp))
                surr1 = ag.mul(ratio, a_mb)
                surr2 = ag.mul(ag.clip(ratio, 1.0 - c.clip_eps, 1.0 + c.clip_eps), a_mb)
                policy_loss = ag.mul(ag.mean(ag.minimum(surr1, surr2)), -1.0)
                ent = ag.mean(entropy)
                values = critic.values(st)
                diff = ag.sub(values, r_mb)
                value_loss = ag.mean(ag.mul(diff, diff))
                total = ag.sub(ag.add(policy_loss, ag.mul(value_loss, c.value_coef)), ag.mul(ent, c.entropy_coef))
            if not np.isfinite(total.data):
                raise NumericError(
                    f"non-finite loss at update {trainer.updates}: policy={policy_loss.data}, value={value_loss.data}"
                )
            if first and on_first_minibatch is not None:
                on_first_minibatch(logp=logp.data.copy(), old_logp=old_logp, ratio=ratio.data.copy(),
                                   advantages=a_mb, policy_loss=float(policy_loss.data))
            first = False
            tape.backward(total, inputs=actor_params + critic_params)
            trainer.actor_opt.step()
            trainer.critic_opt.step()
            stats["policy_loss"].append(float(policy_loss.data))
            stats["value_loss"].append(float(value_loss.data))
            stats["entropy"].append(float(ent.data))
            stats["clip_fraction"].append(float(np.mean(np.abs(ratio.data - 1.0) > c.clip_eps)))
    trainer.updates += 1
    eps = buf.episode_returns
    return TrainLogRecord(
        env_steps=trainer.env_steps,
        update=trainer.updates,
        mean_episode_reward=float(np.mean(eps)) if eps else None,
        policy_loss=float(np.mean(stats["policy_loss"])),
        value_loss=float(np.mean(stats["value_loss"])),
        entropy=float(np.mean(stats["entropy"])),
        clip_fraction=float(np.mean(stats["clip_fraction"])),
        alpha=critic.alpha,
        wall_clock=time.time(),
        episode_rewards=[float(x) for x in eps],
    )


# ----------------------------------------------------------------------------- checkpoints


def _manifest(world_config: WorldConfig, train_config: TrainConfig, trainer: PPOTrainer) -> dict:
    return {
        "version": CHECKPOINT_VERSION,
        "world_hash": config_hash(world_config),
        "train_hash": config_hash(train_config),
        "world_config": world_config.to_dict(),
        "train_config": train_config.to_dict(),
        "env_steps": trainer.env_steps,
        "updates": trainer.updates,
        "seed": train_config.seed,
    }


def save_checkpoint(path, world_config: WorldConfig, train_config: TrainConfig, trainer: PPOTrainer) -> Path:
    """Write params, manifest and the full resumable trainer state under ``path``."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    tag = config_hash(world_config) if world_config is not None else None
    save_params(trainer.actor.params, path / "actor.json", tag)
    save_params(trainer.critic.params, path / "critic.json", tag)
    (path / "manifest.json").write_text(json.dumps(_manifest(world_config, train_config, trainer), indent=1))

    def opt_state(opt: Adam) -> dict:
        s = opt.state_dict()
        return {"t": s["t"], "m": [encode_array(a) for a in s["m"]], "v": [encode_array(a) for a in s["v"]]}

    state = {
        "config_hash": tag,
        "env_steps": trainer.env_steps,
        "updates": trainer.updates,
        "rng": trainer.rng.bit_generator.state,
        "actor_opt": opt_state(trainer.actor_opt),
        "critic_opt": opt_state(trainer.critic_opt),
        "value_norm": trainer.value_norm.state_dict(),
        "hidden_h": encode_array(trainer.rollout_state.h),
        "hidden_c": encode_array(trainer.rollout_state.c),
        "envs": [env.snapshot() for env in trainer.envs],
    }
    (path / "trainer_state.json").write_text(json.dumps(state))
    return path


def read_manifest(path) -> dict:
    try:
        return json.loads((Path(path) / "manifest.json").read_text())
    except OSError as err:
        raise OSError(f"cannot read checkpoint manifest under {path}: {err}") from err


def load_actor(path, world_config: WorldConfig | None = None, force: bool = False) -> tuple[Actor, dict]:
    """Rebuild the actor stored in a checkpoint directory.

    Refuses checkpoints produced for a different world unless ``force``.
    """
    manifest = read_manifest(path)
    if world_config is not None and not force and manifest["world_hash"] != config_hash(world_config):
        raise CompatibilityError(
            f"checkpoint {path} was trained for world {manifest['world_hash']}, "
            f"not {config_hash(world_config)} (use force to override)"
        )
    tc = TrainConfig(**manifest["train_config"])
    wc = WorldConfig.from_dict(manifest["world_config"])
    env = UavEnv(wc)
    actor, _ = build_networks(env, tc)
    assign_params(actor.params, load_params(Path(path) / "actor.json"))
    return actor, manifest


def restore_trainer(path, trainer: PPOTrainer) -> None:
    path = Path(path)
    assign_params(trainer.actor.params, load_params(path / "actor.json"))
    assign_params(trainer.critic.params, load_params(path / "critic.json"))
    state = json.loads((path / "trainer_state.json").read_text())
    trainer.env_steps = state["env_steps"]
    trainer.updates = state["updates"]
    trainer.rng.bit_generator.state = state["rng"]
    for opt, key in ((trainer.actor_opt, "actor_opt"), (trainer.critic_opt, "critic_opt")):
        s = state[key]
        opt.load_state_dict({"t": s["t"], "m": [decode_array(a) for a in s["m"]], "v": [decode_array(a) for a in s["v"]]})
    trainer.value_norm.load_state_dict(state["value_norm"])
    trainer.rollout_state.h = decode_array(state["hidden_h"])
    trainer.rollout_state.c = decode_array(state["hidden_c"])
    for env, snap in zip(trainer.envs, state["envs"]):
        env.restore(snap)


# ----------------------------------------------------------------------------- training loop


@dataclass
class TrainResult:
    actor: Actor
    critic: object
    log: list[TrainLogRecord]
    checkpoints: list[Path]
    best_checkpoint: Path | None


def make_envs(world_config: WorldConfig, n: int) -> list[UavEnv]:
    return [UavEnv(world_config) for _ in range(n)]


def train(world_config: WorldConfig, train_config: TrainConfig, run_dir=None, resume_from=None,
          envs: Sequence | None = None, eval_fn: Callable | None = None, tag: dict | None = None) -> TrainResult:
    """Alternate rollouts and PPO updates until ``total_env_steps``.

    Every ``eval_every`` updates a greedy evaluation episode is logged and,
    when ``run_dir`` is given, a checkpoint is written. ``resume_from`` names
    a checkpoint directory of an earlier run with the same configs. ``tag``
    entries are added to every JSONL log line.
    """
    tag = tag or {}
    c = train_config
    envs = list(envs) if envs is not None else make_envs(world_config, c.num_parallel_envs)
    trainer = PPOTrainer(envs, c)
    run_dir = Path(run_dir) if run_dir is not None else None
    records: list[TrainLogRecord] = []
    checkpoints: list[Path] = []
    log_path = None
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
        log_path = run_dir / "train_log.jsonl"
    if resume_from is not None:
        manifest = read_manifest(resume_from)
        if manifest["train_hash"] != config_hash(c) or manifest["world_hash"] != config_hash(world_config):
            raise CompatibilityError(f"checkpoint {resume_from} was written for different configs")
        restore_trainer(resume_from, trainer)
        if log_path is not None and log_path.exists():
            kept = [json.loads(line) for line in log_path.read_text().splitlines() if line.strip()]
            kept = [r for r in kept if r["env_steps"] <= trainer.env_steps]
            names = {f.name for f in dataclasses.fields(TrainLogRecord)}
            records = [TrainLogRecord(**{k: v for k, v in r.items() if k in names}) for r in kept]
            log_path.write_text("".join(json.dumps(r) + "\n" for r in kept))
    elif log_path is not None:
        log_path.write_text("")
    if eval_fn is None and isinstance(envs[0], UavEnv):
        eval_fn = lambda actor: _greedy_eval(actor, world_config)  # noqa: E731

    best_score, best_path = -math.inf, None
    steps_per_update = c.rollout_len * len(envs)
    while trainer.env_steps + steps_per_update <= c.total_env_steps:
        buf = trainer.collect()
        rec = trainer.update(buf)
        if trainer.updates % c.eval_every == 0 or trainer.env_steps + steps_per_update > c.total_env_steps:
            if eval_fn is not None:
                rec.eval = eval_fn(trainer.actor)
            if run_dir is not None:
                ck = save_checkpoint(run_dir / "checkpoints" / f"step_{trainer.env_steps:09d}", world_config, c, trainer)
                checkpoints.append(ck)
                score = rec.eval["reward"] if rec.eval else (rec.mean_episode_reward or -math.inf)
                if score > best_score:
                    best_score, best_path = score, ck
        records.append(rec)
        if log_path is not None:
            with log_path.open("a") as fh:
                fh.write(json.dumps({**rec.to_dict(), **tag}) + "\n")
        log.info(
            "update %d steps %d reward %s entropy %.3f clip %.3f alpha %s",
            rec.update, rec.env_steps, rec.mean_episode_reward, rec.entropy, rec.clip_fraction, rec.alpha,
        )
    if run_dir is not None and best_path is not None:
        (run_dir / "best_checkpoint.txt").write_text(best_path.name + "\n")
    return TrainResult(trainer.actor, trainer.critic, records, checkpoints, best_path)


def _greedy_eval(actor: Actor, world_config: WorldConfig) -> dict:
    ep = run_episode(LearnedPolicy(actor), world_config, seed=world_config.seed)
    return {"reward": ep.total_reward, "peak_aoi": peak_aoi(ep), "depletions": ep.depletions}


# ----------------------------------------------------------------------------- evaluation


@dataclass
class EvalSummary:
    rewards: list[float]
    peak_aoi: list[float]
    mean_aoi: list[float]
    depletions: list[int]
    episodes: list[EpisodeLog]

    def summary(self) -> dict:
        def ms(xs):
            return {"mean": float(np.mean(xs)), "std": float(np.std(xs))}

        return {
            "n_episodes": len(self.rewards),
            "reward": ms(self.rewards),
            "peak_aoi": ms(self.peak_aoi),
            "mean_aoi": ms(self.mean_aoi),
            "depletions": ms(self.depletions),
            "per_episode": {
                "reward": self.rewards,
                "peak_aoi": self.peak_aoi,
                "mean_aoi": self.mean_aoi,
                "depletions": self.depletions,
            },
        }


def evaluate(policy: Policy | str | Path, world_config: WorldConfig, seeds: Sequence[int],
             vary_layout: bool = True, out_dir=None, force: bool = False) -> EvalSummary:
    """Run one episode per seed and collect metrics.

    ``policy`` may be a checkpoint directory, in which case the greedy
    actor is loaded and its world hash is checked against ``world_config``.
    With ``vary_layout`` each seed also redraws the sensor layout; otherwise
    seeds only drive the policy's own randomness.
    """
    from lasermarl.metrics import export_trajectory

    if isinstance(policy, (str, Path)):
        actor, _ = load_actor(policy, world_config, force=force)
        policy = LearnedPolicy(actor)
    out = EvalSummary([], [], [], [], [])
    for s in seeds:
        cfg = world_config.replace(seed=int(s)) if vary_layout else world_config
        ep = run_episode(policy, cfg, seed=int(s))
        out.episodes.append(ep)
        out.rewards.append(ep.total_reward)
        out.peak_aoi.append(peak_aoi(ep))
        out.mean_aoi.append(ep.mean_aoi)
        out.depletions.append(ep.depletions)
        if out_dir is not None:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            export_trajectory(ep, Path(out_dir) / f"trajectory_seed{s}.csv")
    return out
