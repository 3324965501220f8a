"""Finite-difference verification of every network block.

Parameters are redrawn from N(0, scale²) before checking: the training init
shrinks the policy head to 0.01 gain, which leaves many gradients near 1e-8
where central differences are dominated by roundoff.
"""

from __future__ import annotations

import numpy as np

from lasermarl import autograd as ag
from lasermarl.autograd import Tensor
from lasermarl.policies import Actor, DualAttentionCritic, MLPCritic

TOLERANCE = 1e-4


def randomize(params, rng: np.random.Generator, scale: float = 0.5) -> None:
    for p in params:
        p.data = np.asarray(scale * rng.standard_normal(p.shape), dtype=np.float64).reshape(p.shape)


def check_lstm(seed: int, d_in: int = 5, d_h: int = 6, batch: int = 3) -> float:
    rng = np.random.Generator(np.random.PCG64(seed))
    params = {
        "W": Tensor(0.5 * rng.standard_normal((d_in, 4 * d_h)), requires_grad=True),
        "U": Tensor(0.5 * rng.standard_normal((d_h, 4 * d_h)), requires_grad=True),
        "b": Tensor(0.5 * rng.standard_normal(4 * d_h), requires_grad=True),
    }
    x = Tensor(rng.standard_normal((batch, d_in)), requires_grad=True)
    h = Tensor(rng.standard_normal((batch, d_h)), requires_grad=True)
    c = Tensor(rng.standard_normal((batch, d_h)), requires_grad=True)
    wh, wc = rng.standard_normal((batch, d_h)), rng.standard_normal((batch, d_h))

    def loss():
        h2, c2 = ag.lstm_cell(x, h, c, params)
        return ag.add(ag.sum_(ag.mul(h2, wh)), ag.sum_(ag.mul(c2, wc)))

    return ag.grad_check(loss, [x, h, c, *params.values()])


def check_attention(seed: int, n_q: int = 3, n_k: int = 4, d: int = 5, d_v: int = 3) -> float:
    rng = np.random.Generator(np.random.PCG64(seed))
    q = Tensor(rng.standard_normal((n_q, d)), requires_grad=True)
    k = Tensor(rng.standard_normal((n_k, d)), requires_grad=True)
    v = Tensor(rng.standard_normal((n_k, d_v)), requires_grad=True)
    w = rng.standard_normal((n_q, d_v))
    return ag.grad_check(lambda: ag.sum_(ag.mul(ag.scaled_dot_attention(q, k, v), w)), [q, k, v])


def check_actor(seed: int, obs_dim: int = 9, hidden: int = 8, batch: int = 3, steps: int = 3,
                use_lstm: bool = True) -> float:
    """Unrolls the actor for a few steps and checks a weighted log-prob loss."""
    rng = np.random.Generator(np.random.PCG64(seed))
    actor = Actor(obs_dim, hidden=hidden, use_lstm=use_lstm, seed=seed)
    randomize(actor.parameters(), rng)
    obs = rng.standard_normal((steps, batch, obs_dim))
    weights = rng.standard_normal((steps, batch, actor.n_actions))

    def loss():
        h, c = actor.initial_hidden(batch)
        total = None
        for t in range(steps):
            logits, h, c = actor.logits(obs[t], h, c)
            term = ag.sum_(ag.mul(ag.log_softmax(logits), weights[t]))
            total = term if total is None else ag.add(total, term)
        return total

    return ag.grad_check(loss, actor.parameters())


def check_critic(seed: int, num_uavs: int = 2, num_sensors: int = 3, embed: int = 6, batch: int = 2,
                 dual_attention: bool = True) -> float:
    """Checks a weighted sum of blended values (embeddings, both heads and the blend scalar)."""
    rng = np.random.Generator(np.random.PCG64(seed))
    if dual_attention:
        critic = DualAttentionCritic(num_uavs, num_sensors, embed=embed, mlp_hidden=embed, seed=seed)
    else:
        critic = MLPCritic(num_uavs, num_sensors, hidden=embed, seed=seed)
    randomize(critic.parameters(), rng)
    states = rng.uniform(0.0, 1.0, (batch, critic.state_dim))
    weights = rng.standard_normal((batch, num_uavs))
    return ag.grad_check(lambda: ag.sum_(ag.mul(critic.values(states), weights)), critic.parameters())


BLOCKS = {
    "lstm_cell": check_lstm,
    "attention": check_attention,
    "actor": check_actor,
    "critic": check_critic,
}


def run_all(seeds=(0, 1, 2, 3, 4)) -> dict[str, float]:
    """Max relative error per block over ``seeds``."""
    return {name: max(fn(s) for s in seeds) for name, fn in BLOCKS.items()}
