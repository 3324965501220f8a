"""End-to-end acceptance criteria.

Each test records one PASS/FAIL line; ``conftest.py`` prints them in the
terminal summary and ``python tests/test_acceptance.py`` prints them directly.
The training criteria (8 and 9) take roughly half an hour on one CPU core.
"""

from __future__ import annotations

import os
import time
from pathlib import Path

import numpy as np
import pytest

from lasermarl import gradcheck, metrics, sim
from lasermarl.cli import main as cli_main
from lasermarl.envs import CorridorEnv
from lasermarl.policies import GreedyPolicy, LearnedPolicy, actor_forward
from lasermarl.sim import WorldConfig
from lasermarl.trainer import TrainConfig, compute_gae, evaluate, load_actor, train

RESULTS: dict[int, str] = {}


def report(n: int, ok: bool, detail: str) -> None:
    RESULTS[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(RESULTS[n])
    assert ok, RESULTS[n]


# ----------------------------------------------------------------------------- 1


def test_c1_simulate_determinism(tmp_path, monkeypatch):
    monkeypatch.setenv("LASERMARL_RUN_ROOT", str(tmp_path))
    t0 = time.perf_counter()
    codes = [cli_main(["simulate", "--algo", "greedy", "--seed", "0", "--run-dir", d]) for d in ("a", "b")]
    elapsed = time.perf_counter() - t0
    a = (tmp_path / "a" / "trajectory.csv").read_bytes()
    b = (tmp_path / "b" / "trajectory.csv").read_bytes()
    rows = a.count(b"\n") - 2
    ok = codes == [0, 0] and a == b and rows == 500 * 4 and elapsed / 2 < 5.0
    report(1, ok, f"identical={a == b} rows={rows} seconds_per_run={elapsed / 2:.2f}")


# ----------------------------------------------------------------------------- 2


def _check_step(world, joint, violations):
    cfg = world.config
    prev_e, prev_aoi = world.energy.copy(), world.aoi.copy()
    prev_xy, prev_active = world.uav_xy.copy(), world.active.copy()
    _, out = sim.step(world, joint)
    # energy recurrence
    expected = np.clip(prev_e - np.where(prev_active, cfg.p_move_w * cfg.dt_s, 0.0) + out.charged_j, 0.0,
                       cfg.battery_capacity_j)
    violations["energy"] += int(not np.array_equal(world.energy, expected))
    # AoI dichotomy
    violations["aoi"] += int(not np.all((world.aoi == 0.0) | (world.aoi == prev_aoi + cfg.dt_s)))
    # LBD conservation
    held = world.charging_lbd[world.charging_lbd >= 0]
    ok_lbd = (len(held) == len(set(held.tolist())) == int(world.lbd_busy.sum()) <= cfg.num_lbds
              and all(world.lbd_busy[j] for j in held)
              and np.all(world.charging_lbd[~world.active] == -1))
    violations["lbd"] += int(not ok_lbd)
    # boundary clamp
    inside = np.all((world.uav_xy[:, 0] >= 0) & (world.uav_xy[:, 0] <= cfg.width_m)
                    & (world.uav_xy[:, 1] >= 0) & (world.uav_xy[:, 1] <= cfg.height_m))
    violations["clamp"] += int(not inside)
    # absorbing inactivity
    dead = ~prev_active
    absorbing = (not np.any(world.active & dead)
                 and np.array_equal(world.uav_xy[dead], prev_xy[dead])
                 and np.all(world.energy[~world.active] == 0.0)
                 and np.all(out.charged_j[dead] == 0.0))
    violations["inactive"] += int(not absorbing)


def test_c2_environment_invariants():
    worlds = [
        WorldConfig(),
        # scarce beams and small batteries: contention, depletion and clamping all occur
        WorldConfig(num_lbds=2, battery_capacity_j=30_000.0, initial_energy_j=15_000.0, width_m=300.0,
                    height_m=300.0, station_xy=(150.0, 150.0), charge_radius_m=80.0, num_sensors=20),
    ]
    rng = np.random.Generator(np.random.PCG64(2024))
    violations = {"energy": 0, "aoi": 0, "lbd": 0, "clamp": 0, "inactive": 0}
    steps = depletions = charged = 0
    t0 = time.perf_counter()
    episode = 0
    while steps < 100_000:
        cfg = worlds[episode % 2].replace(seed=episode)
        world = sim.init_world(cfg)
        while not world.done:
            _check_step(world, rng.integers(0, 8, cfg.num_uavs), violations)
            steps += 1
            charged += int((world.charging_lbd >= 0).sum())
        depletions += int((~world.active).sum())
        episode += 1
    elapsed = time.perf_counter() - t0
    total = sum(violations.values())
    report(2, total == 0 and elapsed < 60,
           f"steps={steps} violations={violations} depletions={depletions} charge_events={charged} "
           f"seconds={elapsed:.1f}")


# ----------------------------------------------------------------------------- 3


def test_c3_gradient_check():
    t0 = time.perf_counter()
    errors = gradcheck.run_all(seeds=(0, 1, 2, 3, 4))
    elapsed = time.perf_counter() - t0
    worst = max(errors["actor"], errors["critic"])
    ok = worst <= 1e-4 and all(e <= 1e-4 for e in errors.values()) and elapsed < 60
    report(3, ok, " ".join(f"{k}={v:.2e}" for k, v in errors.items()) + f" seconds={elapsed:.1f}")


# ----------------------------------------------------------------------------- 4


def _discounted_sum_advantages(r, v, d, bootstrap, gamma, lam):
    """Each advantage as an explicit weighted sum of n-step returns within the episode."""
    T = len(r)
    adv = np.zeros(T)
    for t in range(T):
        end = T
        for k in range(t, T):
            if d[k]:
                end = k + 1
                break
        terminal = end < T or d[T - 1]
        tail = 0.0 if terminal else bootstrap
        values_ext = np.append(v, tail)
        # lambda-return: (1-lam) * sum lam^(n-1) G^(n) plus the remaining mass on the full return
        def n_step(n):
            g = sum(gamma ** j * r[t + j] for j in range(n))
            last = t + n
            boot = 0.0 if (last == end and terminal) else values_ext[last] if last < T else tail
            return g + gamma ** n * boot
        horizon = end - t
        lam_ret = sum((1 - lam) * lam ** (n - 1) * n_step(n) for n in range(1, horizon)) + lam ** (horizon - 1) * n_step(horizon)
        adv[t] = lam_ret - v[t]
    return adv


def test_c4_gae_oracle():
    rng = np.random.Generator(np.random.PCG64(4))
    worst = 0.0
    for _ in range(100):
        r, v = rng.standard_normal(20), rng.standard_normal(20)
        d = (rng.uniform(size=20) < 0.1).astype(float)
        b = float(rng.standard_normal())
        gamma, lam = rng.uniform(0.8, 1.0), rng.uniform(0.5, 1.0)
        adv, _ = compute_gae(r, v, d, b, gamma, lam)
        worst = max(worst, float(np.max(np.abs(adv - _discounted_sum_advantages(r, v, d, b, gamma, lam)))))
    hand, _ = compute_gae([1.0, 0.0, 0.0], [0.5, 0.5, 0.5], [0, 0, 0], 0.0, 0.99, 0.95)
    hand_err = float(np.max(np.abs(hand - [0.548027375, -0.47525, -0.5])))
    report(4, worst <= 1e-12 and hand_err <= 1e-12, f"max_abs_err={worst:.2e} hand_example_err={hand_err:.2e}")


# ----------------------------------------------------------------------------- 5


def corridor_optimal_fraction(actor) -> float:
    """Share of visited non-goal states where the greedy action moves right."""
    hits = total = 0
    for start in range(4):
        env = CorridorEnv(seed=0)
        env.reset(start=start)
        h, c = np.zeros(actor.hidden), np.zeros(actor.hidden)
        for _ in range(env.max_steps):
            probs, (h, c) = actor_forward(env.observations()[0], (h, c), actor)
            a = int(np.argmax(probs))
            hits += a == 1
            total += 1
            _, done, _ = env.step([a])
            if done:
                break
    return hits / total


def test_c5_ppo_corridor():
    cfg = TrainConfig(rollout_len=32, chunk_len=8, num_parallel_envs=4, minibatch_chunks=8,
                      total_env_steps=32 * 4 * 200, eval_every=1000, seed=0)
    t0 = time.perf_counter()
    res = train(None, cfg, envs=[CorridorEnv(seed=k) for k in range(4)])
    elapsed = time.perf_counter() - t0
    frac = corridor_optimal_fraction(res.actor)
    report(5, len(res.log) <= 200 and frac >= 0.95 and elapsed < 120,
           f"updates={len(res.log)} optimal_fraction={frac:.3f} seconds={elapsed:.1f}")


# ----------------------------------------------------------------------------- 6


def test_c6_oracle_consistency():
    cfg = metrics.tiny_preset()
    t0 = time.perf_counter()
    best, seq = metrics.brute_force_oracle(cfg)
    replay = metrics.replay_return(cfg, seq)
    greedy = metrics.run_episode(GreedyPolicy(), cfg).team_return
    report(6, replay == best and greedy <= best,
           f"oracle={best!r} replay={replay!r} greedy={greedy!r} seconds={time.perf_counter() - t0:.1f}")


# ----------------------------------------------------------------------------- 7


def test_c7_efficiency_trend():
    t0 = time.perf_counter()
    res = metrics.efficiency_sweep(GreedyPolicy(), [0.10, 0.15, 0.20, 0.25], [0, 1, 2, 3, 4], WorldConfig())
    elapsed = time.perf_counter() - t0
    rho = res.spearman
    report(7, rho <= 0 and elapsed < 600,
           f"median_peak_aoi={res.median_peak_aoi} spearman={rho:.3f} seconds={elapsed:.1f}")


# ----------------------------------------------------------------------------- 8 and 9

PAIRED_SEEDS = (0, 1, 2, 3, 4)
SCALED_STEPS = 200_000


def _final_reward(log, total_steps: int) -> float:
    """Mean training-episode reward over the last 10% of env steps."""
    tail = [r for rec in log if rec.env_steps > 0.9 * total_steps for r in rec.episode_rewards]
    return float(np.mean(tail))


@pytest.fixture(scope="module")
def scaled_runs(tmp_path_factory):
    root = Path(os.environ.get("LASERMARL_ACCEPTANCE_DIR") or tmp_path_factory.mktemp("scaled"))
    out = {"elapsed": 0.0, "runs": {}}
    t0 = time.perf_counter()
    for seed in PAIRED_SEEDS:
        world = metrics.scaled_preset(seed)
        for algo, flag in (("mappo_tm", True), ("mappo", False)):
            tc = TrainConfig(total_env_steps=SCALED_STEPS, seed=seed, use_lstm=flag, use_dual_attention=flag,
                             eval_every=10)
            res = train(world, tc, run_dir=root / f"{algo}_seed{seed}")
            ev = evaluate(LearnedPolicy(load_actor(res.best_checkpoint, world)[0]), world, [seed], vary_layout=False)
            out["runs"][(algo, seed)] = {
                "final_reward": _final_reward(res.log, SCALED_STEPS),
                "peak_aoi": ev.peak_aoi[0],
                "best_checkpoint": res.best_checkpoint,
                "best_eval_reward": ev.rewards[0],
            }
    out["elapsed"] = time.perf_counter() - t0
    return out


def test_c8_mappo_tm_vs_mappo(scaled_runs):
    runs = scaled_runs["runs"]
    reward_diff = [runs[("mappo_tm", s)]["final_reward"] - runs[("mappo", s)]["final_reward"] for s in PAIRED_SEEDS]
    tm_peak = float(np.median([runs[("mappo_tm", s)]["peak_aoi"] for s in PAIRED_SEEDS]))
    m_peak = float(np.median([runs[("mappo", s)]["peak_aoi"] for s in PAIRED_SEEDS]))
    med_diff = float(np.median(reward_diff))
    elapsed = scaled_runs["elapsed"]
    report(8, med_diff >= 0 and tm_peak <= m_peak and elapsed <= 3600,
           f"paired_reward_diff={[round(d, 2) for d in reward_diff]} median={med_diff:.2f} "
           f"peak_aoi tm={tm_peak:.0f} mappo={m_peak:.0f} seconds={elapsed:.0f}")


def test_c9_charging_behaviour(scaled_runs):
    runs = scaled_runs["runs"]
    seed = max(PAIRED_SEEDS, key=lambda s: runs[("mappo_tm", s)]["best_eval_reward"])
    world = metrics.scaled_preset(seed)
    ck = runs[("mappo_tm", seed)]["best_checkpoint"]
    res = evaluate(ck, world, seeds=range(10), vary_layout=False)
    qualifying = []
    for ep in res.episodes:
        qualifying.append(all(any(r >= 3 for r in metrics.charging_runs(ep, i)) for i in range(world.num_uavs)))
    share = float(np.mean(qualifying))
    median_depletions = float(np.median(res.depletions))
    report(9, share >= 0.5 and median_depletions == 0,
           f"seed={seed} checkpoint={ck.name} episodes_with_charging_runs={share:.2f} "
           f"median_depletions={median_depletions:.0f}")


if __name__ == "__main__":
    import sys

    code = pytest.main([__file__, "-q", "-p", "no:cacheprovider"] + sys.argv[1:])
    print("\n".join(RESULTS[k] for k in sorted(RESULTS)))
    sys.exit(code)
