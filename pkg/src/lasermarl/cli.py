"""Command-line entry point: ``lasermarl <subcommand> [options]``.

Exit codes: 0 success, 2 usage, 3 validation, 4 runtime.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from lasermarl import gradcheck, metrics
from lasermarl.config import ALGORITHMS, RunConfig, load_config
from lasermarl.errors import CompatibilityError, ConfigError, LaserMarlError
from lasermarl.policies import GreedyPolicy, LearnedPolicy, Policy, RandomPolicy
from lasermarl.sim import ACTION_NAMES
from lasermarl.trainer import evaluate, load_actor, train

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_RUNTIME = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML run configuration")
    p.add_argument("--seed", type=int, help="override world and trainer seeds")
    p.add_argument("--run-dir", help="output directory (relative paths honour $LASERMARL_RUN_ROOT)")
    p.add_argument("--algo", choices=ALGORITHMS, help="override the configured algorithm")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lasermarl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="{train,eval,sweep,simulate,gradcheck,oracle}")

    p = sub.add_parser("train", help="train MAPPO-TM or vanilla MAPPO")
    _common(p)
    p.add_argument("--no-lstm", action="store_true", help="feed-forward actor")
    p.add_argument("--no-dual-attention", action="store_true", help="MLP critic")
    p.add_argument("--resume", help="checkpoint directory to resume from")

    p = sub.add_parser("eval", help="greedy evaluation episodes")
    _common(p)
    p.add_argument("--checkpoint", help="checkpoint directory (learned algorithms)")
    p.add_argument("--n-episodes", type=int)
    p.add_argument("--force", action="store_true", help="skip the world-hash compatibility check")

    p = sub.add_parser("sweep", help="peak AoI versus laser-to-electricity efficiency")
    _common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--etas", type=float, nargs="+")
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("simulate", help="one scripted or random episode with trajectory export")
    _common(p)

    p = sub.add_parser("gradcheck", help="finite-difference check of every network block")
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])

    p = sub.add_parser("oracle", help="exhaustive search on a tiny single-UAV world")
    p.add_argument("--preset", choices=["tiny"], default="tiny")
    p.add_argument("--horizon", type=int)
    return parser


def _run_config(args) -> RunConfig:
    cfg = load_config(args.config)
    if getattr(args, "algo", None):
        cfg = cfg.with_algorithm(args.algo)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    if getattr(args, "run_dir", None):
        cfg = dataclasses.replace(cfg, paths=dataclasses.replace(cfg.paths, run_dir=args.run_dir))
    return cfg


def _policy(cfg: RunConfig, checkpoint: str | None, force: bool) -> Policy:
    if cfg.algorithm == "greedy":
        return GreedyPolicy(cfg.scripted)
    if cfg.algorithm == "random":
        return RandomPolicy()
    checkpoint = checkpoint or cfg.paths.checkpoint_in
    if checkpoint is None:
        raise UsageError(f"algorithm {cfg.algorithm} needs --checkpoint")
    actor, _ = load_actor(checkpoint, cfg.world, force=force)
    return LearnedPolicy(actor, name=cfg.algorithm)


def _write_json(path: Path, obj, cfg: RunConfig) -> None:
    path.write_text(json.dumps({"config_hash": cfg.hash, **obj}, indent=1) + "\n")


def cmd_train(args) -> int:
    cfg = _run_config(args)
    if cfg.algorithm not in ("mappo_tm", "mappo"):
        raise UsageError(f"train needs a learned algorithm, not {cfg.algorithm}")
    tc = cfg.train
    if args.no_lstm:
        tc = tc.replace(use_lstm=False)
    if args.no_dual_attention:
        tc = tc.replace(use_dual_attention=False)
    cfg = dataclasses.replace(cfg, train=tc)
    run_dir = cfg.resolved_run_dir()
    cfg.echo(run_dir)
    result = train(cfg.world, cfg.train, run_dir=run_dir, resume_from=args.resume, tag={"config_hash": cfg.hash})
    last = result.log[-1] if result.log else None
    print(f"run_dir {run_dir}")
    print(f"updates {len(result.log)} env_steps {last.env_steps if last else 0}")
    if result.best_checkpoint is not None:
        print(f"best_checkpoint {result.best_checkpoint}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _run_config(args)
    policy = _policy(cfg, args.checkpoint, args.force)
    ev = cfg.eval if args.n_episodes is None else dataclasses.replace(cfg.eval, n_episodes=args.n_episodes)
    seeds = ev.episode_seeds(cfg.world.seed)
    # learned policies are evaluated on the layout they were trained on
    vary = cfg.algorithm in ("greedy", "random")
    run_dir = cfg.resolved_run_dir()
    cfg.echo(run_dir)
    res = evaluate(policy, cfg.world, seeds, vary_layout=vary, out_dir=run_dir / "trajectories")
    summary = res.summary()
    _write_json(run_dir / "eval.json", {"algorithm": cfg.algorithm, "seeds": seeds, **summary}, cfg)
    print(json.dumps({k: summary[k] for k in ("reward", "peak_aoi", "mean_aoi", "depletions")}))
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _run_config(args)
    policy = _policy(cfg, args.checkpoint, args.force)
    etas = args.etas or list(cfg.sweep.etas)
    res = metrics.efficiency_sweep(policy, etas, cfg.sweep.seeds, cfg.world)
    run_dir = cfg.resolved_run_dir()
    cfg.echo(run_dir)
    res.to_json(run_dir / "sweep.json", header_hash=cfg.hash)
    for e, m in zip(res.etas, res.median_peak_aoi):
        print(f"eta {e:.3f} median_peak_aoi {m:.1f}")
    print(f"spearman {res.spearman:.4f}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _run_config(args)
    if cfg.algorithm not in ("greedy", "random"):
        raise UsageError("simulate runs the scripted baselines: use --algo greedy or --algo random")
    policy = _policy(cfg, None, False)
    ep = metrics.run_episode(policy, cfg.world, seed=cfg.world.seed)
    run_dir = cfg.resolved_run_dir()
    cfg.echo(run_dir)
    metrics.export_trajectory(ep, run_dir / "trajectory.csv")
    _write_json(
        run_dir / "episode.json",
        {"reward": ep.total_reward, "peak_aoi": metrics.peak_aoi(ep), "mean_aoi": ep.mean_aoi, "depletions": ep.depletions},
        cfg,
    )
    print(f"reward {ep.total_reward:.4f} peak_aoi {metrics.peak_aoi(ep):.1f} depletions {ep.depletions}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    ok = True
    for name, fn in gradcheck.BLOCKS.items():
        err = max(fn(s) for s in args.seeds)
        passed = err <= gradcheck.TOLERANCE
        ok &= passed
        print(f"{name:10s} max_rel_err {err:.3e} {'ok' if passed else 'FAIL'}")
    return EXIT_OK if ok else EXIT_RUNTIME


def cmd_oracle(args) -> int:
    cfg = metrics.tiny_preset()
    best, seq = metrics.brute_force_oracle(cfg, args.horizon)
    print(f"best_return {best!r}")
    print("sequence " + " ".join(ACTION_NAMES[a] for a in seq))
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "simulate": cmd_simulate,
    "gradcheck": cmd_gradcheck,
    "oracle": cmd_oracle,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except UsageError as err:
        parser.print_usage(sys.stderr)
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, CompatibilityError) as err:
        print(f"validation error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except (LaserMarlError, OSError) as err:
        print(f"runtime error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
