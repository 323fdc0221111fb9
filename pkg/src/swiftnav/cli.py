"""``swiftnav`` command line: train / eval / replay / plot.

Exit codes: 0 success, 2 configuration error, 3 training divergence,
4 I/O or data-file error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import struct
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence

from .config import ABLATIONS, PRESETS, ConfigError, RunConfig, load_config, to_text, with_ablation
from .env import EpisodeResult, Stack, moving_average, run_episode, state_scale, train
from .replay import PERBuffer
from .rewards import preset as reward_preset
from .svg import CSVFormatError, learning_curve_svg, read_episode_log, read_trajectory, trajectory_svg
from .td3 import CheckpointVersionError, TD3Agent, load_checkpoint, save_checkpoint
from .world import World, bundled_world_path, load_world

log = logging.getLogger("swiftnav")

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 2, 3, 4


class CLIError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def resolve_world(spec: str, safety_radius: float = 0.5) -> World:
    """A bundled world name (traj1, traj2) or a path to a world JSON file."""
    path = bundled_world_path(spec) if spec in PRESETS else Path(spec)
    if not Path(path).is_file():
        raise CLIError(f"world not found: {spec}", EXIT_IO)
    try:
        return load_world(path, safety_radius=safety_radius)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise CLIError(f"{spec}: invalid world file: {exc}", EXIT_IO) from None


def build_stack(cfg: RunConfig, agent: Optional[TD3Agent] = None) -> Stack:
    if agent is None:
        agent = TD3Agent(72, 10, cfg.td3, seed=cfg.run.seed, state_scale=state_scale(cfg.sensor.max_range))
    p = cfg.per
    return Stack(
        table=reward_preset(cfg.preset),
        env=cfg.env,
        sensor=cfg.sensor,
        fuzzy=cfg.fuzzy,
        travel=cfg.travel,
        landing=cfg.landing,
        arbiter=cfg.arbiter,
        checker=cfg.checker,
        exploration=cfg.exploration,
        limits=cfg.limits,
        agent=agent,
        buffer=PERBuffer(p.capacity, p.alpha, p.beta_start, p.beta_end, p.priority_floor),
    )


def write_trajectory(path: Path, trajectory) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "x", "y", "z", "mode"])
        for t, x, y, z, mode in trajectory:
            w.writerow([repr(t), repr(x), repr(y), repr(float(z)), mode])


def write_switch_log(path: Path, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "from", "to"])
        w.writerows(rows)


def _episode_row(row) -> List[str]:
    return [str(row.episode), str(row.steps), repr(float(row.ret)), "1" if row.success else "0",
            str(row.switches), row.outcome]


def _load_cfg(args, world: Optional[str] = None, episode_cap: Optional[int] = None) -> RunConfig:
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
    except FileNotFoundError:
        raise CLIError(f"config not found: {args.config}", EXIT_IO) from None
    except ConfigError as exc:
        raise CLIError(str(exc), EXIT_CONFIG) from None
    if args.seed is not None:
        cfg = replace(cfg, run=replace(cfg.run, seed=args.seed))
    if world is not None:
        cfg = replace(cfg, run=replace(cfg.run, world=world))
    if episode_cap is not None:
        cfg = replace(cfg, run=replace(cfg.run, episode_cap=episode_cap))
    try:
        return with_ablation(cfg, args.ablation)
    except ConfigError as exc:
        raise CLIError(str(exc), EXIT_CONFIG) from None


def cmd_train(args) -> int:
    cfg = _load_cfg(args, args.world, args.episodes)
    world = resolve_world(cfg.run.world, cfg.env.safety_radius)
    out = cfg.out_dir()
    try:
        for sub in ("checkpoints", "trajectories", "switches"):
            (out / sub).mkdir(parents=True, exist_ok=True)
        (out / "config.ini").write_text(to_text(cfg))
        log_fh = (out / "episodes.csv").open("w", newline="")
    except OSError as exc:
        raise CLIError(f"{out}: cannot write output: {exc}", EXIT_IO) from None
    stack = build_stack(cfg)
    writer = csv.writer(log_fh, lineterminator="\n")
    writer.writerow(["episode", "steps", "return", "success", "switches", "outcome"])
    every = cfg.run.checkpoint_every

    def on_episode(row, result: EpisodeResult):
        writer.writerow(_episode_row(row))
        log_fh.flush()
        if every and (row.episode + 1) % every == 0:
            save_checkpoint(stack.agent, out / "checkpoints" / f"ep{row.episode + 1:05d}.ckpt")
        if not args.quiet and (row.episode + 1) % 10 == 0:
            print(f"episode {row.episode + 1}: steps={row.steps} return={row.ret:.1f} outcome={row.outcome}",
                  file=sys.stderr)

    try:
        tlog = train(world, stack, cfg.run.seed, cfg.run.episode_cap, cfg.run.success_target, on_episode)
    finally:
        log_fh.close()
    save_checkpoint(stack.agent, out / "checkpoints" / "final.ckpt")
    for ep, res in sorted(tlog.saved.items()):
        write_trajectory(out / "trajectories" / f"ep{ep:05d}.csv", res.trajectory)
        write_switch_log(out / "switches" / f"ep{ep:05d}.csv", res.switch_log)

    rows = tlog.rows
    ma_ret = moving_average([r.ret for r in rows])
    ma_steps = moving_average([r.steps for r in rows])
    reached = tlog.successes >= cfg.run.success_target
    summary = {
        "episodes": len(rows),
        "successes": tlog.successes,
        "episodes_to_target": len(rows) if reached else None,
        "final_ma_return": ma_ret[-1] if rows else None,
        "final_ma_steps": ma_steps[-1] if rows else None,
        "total_switches": sum(r.switches for r in rows),
        "diverged": tlog.diverged,
    }
    print("summary " + json.dumps(summary))
    if tlog.diverged:
        print(f"error: {tlog.diverged}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def _load_agent(path: str) -> TD3Agent:
    if not Path(path).is_file():
        raise CLIError(f"checkpoint not found: {path}", EXIT_IO)
    try:
        return load_checkpoint(path)
    except CheckpointVersionError as exc:
        raise CLIError(f"{path}: {exc}", EXIT_IO) from None
    except (ValueError, struct.error) as exc:
        raise CLIError(f"{path}: unreadable checkpoint: {exc}", EXIT_IO) from None


def evaluate(world: World, cfg: RunConfig, agent: TD3Agent, episodes: int, seed: int):
    """Greedy rollouts: no exploration, no learning, no target noise."""
    stack = build_stack(cfg, agent)
    stack.learn = False
    stack.explore = False
    results = []
    for k in range(episodes):
        res, _ = run_episode(world, stack, seed=seed * 100_003 + k)
        results.append(res)
    return results


def eval_report(results: Sequence[EpisodeResult]) -> dict:
    n = len(results)
    if n == 0:
        return {"episodes": 0, "success_rate": None, "mean_steps": None, "mean_return": None, "mean_switches": None}
    return {
        "episodes": n,
        "success_rate": sum(r.success for r in results) / n,
        "mean_steps": sum(r.steps for r in results) / n,
        "mean_return": sum(r.ret for r in results) / n,
        "mean_switches": sum(r.switch_count for r in results) / n,
    }


def cmd_eval(args) -> int:
    cfg = _load_cfg(args, args.world)
    if args.preset:
        cfg = replace(cfg, run=replace(cfg.run, preset=args.preset))
    agent = _load_agent(args.checkpoint)
    world = resolve_world(cfg.run.world, cfg.env.safety_radius)
    results = evaluate(world, cfg, agent, args.episodes, cfg.run.seed)
    out = cfg.out_dir() / "eval"
    try:
        out.mkdir(parents=True, exist_ok=True)
        for k, res in enumerate(results):
            write_trajectory(out / f"ep{k:05d}.csv", res.trajectory)
    except OSError as exc:
        raise CLIError(f"{out}: cannot write output: {exc}", EXIT_IO) from None
    print("eval " + json.dumps(eval_report(results)))
    return EXIT_OK


def cmd_replay(args) -> int:
    world = resolve_world(args.world)
    traj = _read_csv(read_trajectory, args.trajectory)
    out = Path(args.out) if args.out else Path(args.trajectory).with_suffix(".svg")
    _write(out, trajectory_svg(world, [traj], title=Path(args.trajectory).name))
    length = sum(((b[1] - a[1]) ** 2 + (b[2] - a[2]) ** 2) ** 0.5 for a, b in zip(traj, traj[1:]))
    modes = {}
    for row in traj:
        modes[row[4]] = modes.get(row[4], 0) + 1
    print("replay " + json.dumps({"points": len(traj), "path_length": length, "mode_counts": modes, "svg": str(out)}))
    return EXIT_OK


def cmd_plot(args) -> int:
    rows = _read_csv(read_episode_log, args.log)
    _write(Path(args.out), learning_curve_svg(rows, title=Path(args.log).name))
    if args.trajectory:
        if not args.world:
            raise CLIError("plot: --trajectory requires --world", EXIT_CONFIG)
        world = resolve_world(args.world)
        trajs = [_read_csv(read_trajectory, p) for p in args.trajectory]
        out = Path(args.out)
        _write(out.with_name(out.stem + "_paths.svg"), trajectory_svg(world, trajs))
    return EXIT_OK


def _read_csv(reader, path):
    try:
        return reader(path)
    except FileNotFoundError:
        raise CLIError(f"file not found: {path}", EXIT_IO) from None
    except CSVFormatError as exc:
        raise CLIError(str(exc), EXIT_IO) from None


def _write(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise CLIError(f"{path}: cannot write: {exc}", EXIT_IO) from None


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="swiftnav", description="Planar UAV navigation with a fuzzy-gated TD3 planner.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def run_opts(sp):
        sp.add_argument("--config", help="INI run configuration (defaults when omitted)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--ablation", choices=[a for a in ABLATIONS if a != "none"])

    t = sub.add_parser("train", help="train until the success target or the episode cap")
    run_opts(t)
    t.add_argument("--world", help="override [run] world")
    t.add_argument("--episodes", type=int, help="override [run] episode_cap")
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="greedy rollouts of a checkpoint")
    run_opts(e)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--world")
    e.add_argument("--episodes", type=int, default=10)
    e.add_argument("--preset", choices=PRESETS)
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("replay", help="render a trajectory CSV over its world")
    r.add_argument("--trajectory", required=True)
    r.add_argument("--world", required=True)
    r.add_argument("--out")
    r.set_defaults(func=cmd_replay)

    pl = sub.add_parser("plot", help="learning curves (and optional path overlays) as SVG")
    pl.add_argument("--log", required=True)
    pl.add_argument("--out", required=True)
    pl.add_argument("--trajectory", nargs="*")
    pl.add_argument("--world")
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
