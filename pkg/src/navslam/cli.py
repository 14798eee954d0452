"""Command-line entry points: train, eval, compare, waypoint, render, check.

Exit status taxonomy: 0 ok, 2 configuration error, 3 runtime error,
4 invariant-check failure.  Log verbosity comes from the NAVSLAM_LOG
environment variable (debug, info, warning; default warning).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, dump_config, effective_config
from .ddpg import CheckpointError, DdpgAgent
from .robot import RobotState
from .reward import RewardParams
from .world import World, WorldFormatError, resolve_world

log = logging.getLogger("navslam")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_CHECK_FAILED = 4


def _setup_logging() -> None:
    level = {"debug": logging.DEBUG, "info": logging.INFO,
             "warning": logging.WARNING}.get(os.environ.get("NAVSLAM_LOG", "").lower(),
                                             logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML config file merged over the preset")
    p.add_argument("--preset", choices=["paper", "desk"], help="named base configuration")
    p.add_argument("--seed", type=int, help="master RNG seed")
    p.add_argument("--world", help="world file path or bundled name (env1, env2, env3, ...)")
    p.add_argument("--out", help="output directory")


def _build_config(args) -> dict:
    overrides: dict = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "world", None):
        overrides["world"] = {"path": args.world}
    return effective_config(preset=args.preset, config_path=args.config,
                            overrides=overrides)


def _parse_point(text: str) -> tuple[float, float]:
    parts = [float(t) for t in text.split(",")]
    if len(parts) != 2:
        raise ConfigError(f"expected 'x,y', got {text!r}")
    return (parts[0], parts[1])


# ------------------------------------------------------------------ commands

def cmd_train(args) -> int:
    from . import trainer

    cfg = _build_config(args)
    if not cfg["world"]["path"]:
        raise ConfigError("train needs --world (or world.path in the config)")
    out = Path(args.out or "runs/train")
    report = trainer.train(cfg, out_dir=out)
    print(f"trained {len(report.episodes)} episodes in {cfg['world']['path']}")
    print(f"final success ratio {report.success_ratio:.2f}, "
          f"collision ratio {report.collision_ratio:.2f}")
    print(f"checkpoint: {report.checkpoint_path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from . import trainer

    cfg = _build_config(args)
    agent, meta, _ = DdpgAgent.load_checkpoint(args.checkpoint)
    world = resolve_world(args.world or cfg["world"]["path"] or "")
    report = trainer.evaluate(agent, world, args.targets, cfg,
                              seed=cfg["seed"], workers=cfg["eval"]["workers"])
    mean = "n/a" if report.actions_mean is None else f"{report.actions_mean:.1f}"
    std = "n/a" if report.actions_std is None else f"{report.actions_std:.1f}"
    print(f"world: {world.name}   agent: {meta.get('label') or args.checkpoint}")
    print(f"success ratio: {100.0 * report.success_ratio:.0f}%")
    print(f"actions (mean +- std among successes): {mean} +- {std}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        payload = {"world": world.name, "success_ratio": report.success_ratio,
                   "actions_mean": report.actions_mean, "actions_std": report.actions_std,
                   "outcomes": report.outcome_counts}
        (out / "eval.json").write_text(json.dumps(payload, indent=2) + "\n")
    return EXIT_OK


def cmd_compare(args) -> int:
    from . import trainer

    cfg = _build_config(args)
    world = resolve_world(args.world or cfg["world"]["path"] or "")
    rows = []
    for path in (args.checkpoint_a, args.checkpoint_b):
        agent, meta, _ = DdpgAgent.load_checkpoint(path)
        report = trainer.evaluate(agent, world, args.targets, cfg,
                                  seed=cfg["seed"], workers=cfg["eval"]["workers"])
        label = meta.get("label") or Path(path).stem
        rows.append((label, report))
    print(f"world: {world.name}   targets: {args.targets}   seed: {cfg['seed']}")
    print(f"{'approach':<16} {'success %':>10}   actions (mean +- std)")
    for label, report in rows:
        mean = "n/a" if report.actions_mean is None else f"{report.actions_mean:.1f}"
        std = "n/a" if report.actions_std is None else f"{report.actions_std:.1f}"
        print(f"{label:<16} {100.0 * report.success_ratio:>9.0f}%   {mean} +- {std}")
    return EXIT_OK


def cmd_waypoint(args) -> int:
    from . import trainer

    cfg = _build_config(args)
    agent, _, _ = DdpgAgent.load_checkpoint(args.checkpoint)
    world = resolve_world(args.world or cfg["world"]["path"] or "")
    sx, sy = _parse_point(args.start)
    goals = [_parse_point(t) for t in args.goals.split(";") if t.strip()]
    if not goals:
        raise ConfigError("waypoint needs at least one goal as 'x,y;x,y;...'")
    start = RobotState(x=sx, y=sy, heading=float(args.heading))
    run = trainer.waypoint_run(agent, world, start, goals, cfg, seed=cfg["seed"])
    print(f"goals reached: {run['goals_reached']}/{len(goals)} "
          f"(final outcome: {run['final_outcome'].value})")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        trainer.write_trajectory_csv(out / "trajectory.csv", run)
        print(f"trajectory: {out / 'trajectory.csv'}")
    return EXIT_OK


def cmd_render(args) -> int:
    from . import render
    from .slam_grid import load_grid

    cfg = _build_config(args)
    world = resolve_world(args.world or cfg["world"]["path"] or "")
    out = Path(args.out or "render.png")
    out.parent.mkdir(parents=True, exist_ok=True)
    grid = load_grid(args.map) if args.map else None
    trajectories = []
    if args.trajectory:
        rows = np.loadtxt(args.trajectory, delimiter=",", skiprows=1)
        if rows.ndim == 1:
            rows = rows[None, :]
        trajectories.append(rows[:, 1:4])
    goal = _parse_point(args.goal) if args.goal else (world.bounds[0] / 2.0,
                                                      world.bounds[1] / 2.0)
    render.render_overlay(out, world, grid=grid, trajectories=trajectories,
                          goals=[goal] if args.map else None)
    print(f"wrote {out}")
    if grid is not None:
        rw = cfg["reward"]
        params = RewardParams(r_reached=rw["r_reached"], r_crashed=rw["r_crashed"],
                              decay_rate=rw["decay_rate"], d_min=rw["d_min"],
                              max_steps=cfg["eval"]["max_steps"])
        heat = out.with_name(out.stem + "_reward" + out.suffix)
        render.render_reward_heatmap(heat, world, grid, goal, params,
                                     confidence=args.confidence)
        print(f"wrote {heat}")
    return EXIT_OK


def cmd_check(args) -> int:
    from .checks import run_invariant_checks

    failures = run_invariant_checks(verbose=True)
    if failures:
        print(f"{failures} invariant check(s) FAILED")
        return EXIT_CHECK_FAILED
    print("all invariant checks passed")
    return EXIT_OK


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="navslam",
                                     description="2D navigation stack: simulator, "
                                                 "grid SLAM, DDPG planner, benchmarks")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train an agent")
    _add_common(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on random targets")
    _add_common(p)
    p.add_argument("checkpoint")
    p.add_argument("--targets", type=int, default=100)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("compare", help="evaluate two checkpoints on one shared target set")
    _add_common(p)
    p.add_argument("checkpoint_a")
    p.add_argument("checkpoint_b")
    p.add_argument("--targets", type=int, default=100)
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("waypoint", help="chase an ordered list of goals")
    _add_common(p)
    p.add_argument("checkpoint")
    p.add_argument("--start", required=True, help="start position 'x,y'")
    p.add_argument("--heading", type=float, default=0.0)
    p.add_argument("--goals", required=True, help="semicolon-separated 'x,y' list")
    p.set_defaults(fn=cmd_waypoint)

    p = sub.add_parser("render", help="render world, map, trajectory, reward surface")
    _add_common(p)
    p.add_argument("--map", help="exported occupancy grid (.grid)")
    p.add_argument("--trajectory", help="trajectory CSV from waypoint/eval")
    p.add_argument("--goal", help="goal 'x,y' for the reward surface")
    p.add_argument("--confidence", type=float,
                   help="override the map confidence of the reward surface")
    p.set_defaults(fn=cmd_render)

    p = sub.add_parser("check", help="run the fast invariant suite")
    _add_common(p)
    p.set_defaults(fn=cmd_check)
    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, WorldFormatError, CheckpointError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        log.exception("command failed")
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
