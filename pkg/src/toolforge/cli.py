"""``toolforge`` command line entry point.

Exit codes: 0 success, 1 usage error, 2 invalid input, 3 runtime failure.
Every output file is written atomically. Batch commands take ``--jobs N``;
items are independent (seeded by ``(seed, purpose, index)``) so results do
not depend on N.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from ._io import atomic_write_text
from .assets import TOOL_SCHEMA_VERSION, import_tool, sample_tool, tool_to_json
from .config import CONFIG_SCHEMA_VERSION, ExperimentConfig, dumps_config, load_config
from .env import ToolEnv
from .errors import ParseError, ToolforgeError, ValidationError
from .geometry import Pose
from .planners import (
    Plane,
    TrajOptProblem,
    evaluate_plan,
    fixed_grasp_targets,
    optimize_trajectory,
    sequential_ik,
    table_plane,
)
from .policies import easy_goal_chain, make_policy, rollout_episode, write_episode_log
from .robot import default_model, load_model
from .seeding import derive_rng
from .trajectory import (
    RecordedRollout,
    evaluate_progress,
    load_trajectory,
    preprocess,
    save_trajectory,
    write_report_csv,
)

EXIT_USAGE, EXIT_INVALID, EXIT_RUNTIME = 1, 2, 3
TRAJECTORY_SCHEMA_VERSION = 1
LOG_SCHEMA_VERSION = 1


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def fixture_path(name: str) -> Path:
    return Path(str(resources.files("toolforge") / "data" / "fixtures" / name))


def _config(args) -> ExperimentConfig:
    return load_config(args.config) if getattr(args, "config", None) else ExperimentConfig()


def _model(path):
    return load_model(path) if path else default_model()


def _map(fn, items, jobs: int):
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _write_json(path, data) -> None:
    atomic_write_text(path, json.dumps(data, indent=2, sort_keys=True) + "\n")


# -- gen -----------------------------------------------------------------------


def _gen_one(item):
    seed, index, resolution = item
    return tool_to_json(sample_tool(derive_rng(seed, "tool", index), seed=seed, mesh_resolution=resolution))


def cmd_gen(args) -> int:
    if args.count < 0:
        raise ValidationError("--count must be non-negative")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    texts = _map(_gen_one, [(args.seed, i, args.mesh_resolution) for i in range(args.count)], args.jobs)
    for i, text in enumerate(texts):
        atomic_write_text(out / f"tool_{i:05d}.json", text)
    print(f"wrote {len(texts)} tools to {out}")
    return 0


# -- preprocess ----------------------------------------------------------------


def cmd_preprocess(args) -> int:
    traj = load_trajectory(args.input)
    out = preprocess(traj, args.out_hz, args.z_table, args.z_thresh)
    save_trajectory(out, args.output)
    print(f"{len(traj)} frames at {traj.rate_hz:g} Hz -> {len(out)} frames at {out.rate_hz:g} Hz")
    return 0


# -- rollout -------------------------------------------------------------------


def _rollout_one(item):
    cfg, policy_name, seed, index, tool_path, robot_path, goals_path, easy_goals = item
    model = _model(robot_path)
    tool = import_tool(tool_path) if tool_path else sample_tool(derive_rng(seed, "tool", index), seed=seed)
    env = ToolEnv(model, tool, cfg.env, cfg.control, cfg.reward, cfg.dr, env_index=index)
    goals = None
    if goals_path:
        goals = load_trajectory(goals_path).poses
    elif easy_goals:
        goals = easy_goal_chain(env, seed, easy_goals)
    policy = make_policy(policy_name, model, tool, cfg.control, seed=seed, index=index)
    result = rollout_episode(env, policy, seed, goals=goals)
    report = None
    if goals is not None:
        report = evaluate_progress(result.frames, goals, cfg.eval.success_tolerance, cfg.eval.step_budget).to_dict()
    return result, report


def cmd_rollout(args) -> int:
    cfg = _config(args)
    seed = cfg.seed if args.seed is None else args.seed
    if args.episodes <= 0:
        raise ValidationError("--episodes must be positive")
    log = Path(args.log)
    log.mkdir(parents=True, exist_ok=True)
    items = [
        (cfg, args.policy, seed, i, args.tool, args.robot, args.goals, args.easy_goals) for i in range(args.episodes)
    ]
    results = _map(_rollout_one, items, args.jobs)
    summary = []
    for i, (result, report) in enumerate(results):
        write_episode_log(log / f"episode_{i:04d}.jsonl", result)
        row = {"episode": i, **result.summary()}
        if report is not None:
            row["progress"] = report
        summary.append(row)
    _write_json(log / "summary.json", {"policy": args.policy, "seed": seed, "episodes": summary})
    for row in summary:
        extra = f" progress={row['progress']['task_progress']:.1f}%" if "progress" in row else ""
        print(f"episode {row['episode']}: {row['termination']} after {row['steps']} steps, "
              f"reward {row['total_reward']:.2f}, successes {row['success_events']}{extra}")
    return 0


# -- plan ----------------------------------------------------------------------


def _load_grab(path) -> Pose:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict) or "grab" not in data:
        raise ParseError(f"{path}: missing field 'grab'")
    value = data["grab"]
    if not isinstance(value, list) or len(value) != 7:
        raise ParseError(f"{path}: field 'grab' must be a list of 7 numbers")
    return Pose.from_list(value)


def cmd_plan(args) -> int:
    cfg = _config(args)
    pc = cfg.planner
    model = _model(args.robot)
    goals_path = args.goals or fixture_path("table_rotation_goals.jsonl")
    grab_path = args.grab or fixture_path("table_rotation_grab.json")
    goals = load_trajectory(goals_path).poses
    grab = _load_grab(grab_path)
    obstacles = [table_plane(pc.table_z)]
    if args.wall is not None:
        obstacles.append(Plane(tuple(args.wall[:3]), args.wall[3], "wall"))
    targets = fixed_grasp_targets(grab, goals)
    qs = sequential_ik(model, targets, model.default_q, mu=pc.damping, iters=pc.ik_iters, tol=pc.ik_tol)
    if args.mode == "dls":
        report = evaluate_plan(model, qs, targets, obstacles=obstacles, mode="dls")
    else:
        problem = TrajOptProblem(
            targets, w_position=pc.w_position, w_rotation=pc.w_rotation, w_smooth=pc.w_smooth, w_limit=pc.w_limit,
            w_collision=pc.w_collision, collision_activation=pc.collision_activation, obstacles=obstacles,
            max_iters=pc.max_iters, tol=pc.tol,
        )
        qs, report = optimize_trajectory(problem, model, qs)
    data = report.to_dict()
    data["joint_trajectory"] = [np.asarray(q).tolist() for q in qs]
    _write_json(args.report, data)
    print(f"{args.mode}: min collision margin {report.min_collision_margin:+.4f} m, "
          f"max pose error {max(report.position_errors):.4f} m / {max(report.rotation_errors):.4f} rad")
    return 0


# -- eval ----------------------------------------------------------------------


def cmd_eval(args) -> int:
    cfg = _config(args)
    goals = load_trajectory(args.goals or fixture_path("synthetic_goals.jsonl"))
    rollouts = args.rollout or [str(fixture_path("synthetic_rollout.jsonl"))]
    eps = cfg.eval.success_tolerance if args.eps is None else args.eps
    reports = {}
    for path in rollouts:
        reports[str(path)] = evaluate_progress(RecordedRollout.load(path), goals, eps, args.step_budget)
    data = {"eps": eps, "rollouts": {k: r.to_dict() for k, r in reports.items()}}
    if args.report:
        _write_json(args.report, data)
    if args.csv:
        write_report_csv(args.csv, reports)
    for name, r in reports.items():
        print(f"{name}: {r.reached}/{r.total} goals, progress {r.progress:.1f}%, failure {r.failure}")
    return 0


# -- report --------------------------------------------------------------------


def cmd_report(args) -> int:
    log = Path(args.log)
    episodes = sorted(log.glob("episode_*.jsonl"))
    if not episodes:
        raise ValidationError(f"no episode logs in {log}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    curve = io.StringIO()
    w = csv.writer(curve)
    w.writerow(("episode", "step", "r_smooth", "r_approach", "r_lift", "r_goal", "total", "cumulative", "d"))
    bars = io.StringIO()
    wb = csv.writer(bars)
    wb.writerow(("episode", "steps", "termination", "success_events", "total_reward"))
    for path in episodes:
        cumulative = 0.0
        summary = None
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ParseError(f"{path}:{lineno}:{exc.colno}: {exc.msg}") from None
                if "episode" in rec and "step" not in rec:
                    summary = rec["episode"]
                    continue
                for key in ("step", "reward_terms", "d"):
                    if key not in rec:
                        raise ParseError(f"{path}:{lineno}: record is missing field '{key}'")
                t = rec["reward_terms"]
                cumulative += t["total"]
                w.writerow((path.stem, rec["step"], repr(t["smooth"]), repr(t["approach"]), repr(t["lift"]),
                            repr(t["goal"]), repr(t["total"]), repr(cumulative), repr(rec["d"])))
        if summary is None:
            raise ParseError(f"{path}: missing episode header")
        wb.writerow((path.stem, summary["steps"], summary["termination"], summary["success_events"],
                     repr(summary["total_reward"])))
    atomic_write_text(out / "reward_curves.csv", curve.getvalue())
    atomic_write_text(out / "episodes.csv", bars.getvalue())
    print(f"wrote {out / 'reward_curves.csv'} and {out / 'episodes.csv'}")
    return 0


# -- config --------------------------------------------------------------------


def cmd_config(args) -> int:
    text = dumps_config(_config(args), args.format)
    if args.out:
        atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    versions = (
        f"toolforge {__version__} (tool schema {TOOL_SCHEMA_VERSION}, config schema {CONFIG_SCHEMA_VERSION}, "
        f"trajectory schema {TRAJECTORY_SCHEMA_VERSION}, log schema {LOG_SCHEMA_VERSION})"
    )
    p = _Parser(prog="toolforge", description="Procedural tools, lite environment, planners and evaluation.")
    p.add_argument("--version", action="version", version=versions)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate seeded procedural tools")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--mesh-resolution", type=int, default=0)
    g.add_argument("--jobs", type=int, default=1)
    g.set_defaults(func=cmd_gen)

    pp = sub.add_parser("preprocess", help="downsample and lift-off truncate a goal trajectory")
    pp.add_argument("--in", dest="input", required=True)
    pp.add_argument("--out", dest="output", required=True)
    pp.add_argument("--out-hz", type=float, default=3.0)
    pp.add_argument("--z-table", type=float, default=None, help="defaults to the file's table_z")
    pp.add_argument("--z-thresh", type=float, default=0.10)
    pp.set_defaults(func=cmd_preprocess)

    r = sub.add_parser("rollout", help="run scripted-policy episodes and write JSONL logs")
    r.add_argument("--policy", choices=("oracle", "random", "frozen"), required=True)
    r.add_argument("--episodes", type=int, default=1)
    r.add_argument("--seed", type=int, default=None, help="defaults to the config seed")
    r.add_argument("--log", required=True)
    r.add_argument("--config")
    r.add_argument("--tool", help="tool JSON (default: one sampled per episode)")
    r.add_argument("--robot")
    goal_src = r.add_mutually_exclusive_group()
    goal_src.add_argument("--goals", help="goal trajectory JSONL (sequence mode)")
    goal_src.add_argument("--easy-goals", type=int, default=0, metavar="K", help="use a K-goal easy chain")
    r.add_argument("--jobs", type=int, default=1)
    r.set_defaults(func=cmd_rollout)

    pl = sub.add_parser("plan", help="fixed-grasp DLS or trajectory-optimized plan")
    pl.add_argument("--mode", choices=("dls", "trajopt"), required=True)
    pl.add_argument("--goals", help="object goal trajectory (default: bundled table-rotation fixture)")
    pl.add_argument("--grab", help="JSON with 'grab': [7] (default: bundled fixture)")
    pl.add_argument("--robot")
    pl.add_argument("--config")
    pl.add_argument("--wall", type=float, nargs=4, metavar=("NX", "NY", "NZ", "OFFSET"))
    pl.add_argument("--report", required=True)
    pl.set_defaults(func=cmd_plan)

    e = sub.add_parser("eval", help="closed-loop Task Progress of recorded rollouts")
    e.add_argument("--rollout", action="append", help="rollout log JSONL (repeatable; default: bundled fixture)")
    e.add_argument("--goals", help="goal trajectory JSONL (default: bundled fixture)")
    e.add_argument("--eps", type=float, default=None)
    e.add_argument("--step-budget", type=int, default=None)
    e.add_argument("--config")
    e.add_argument("--report")
    e.add_argument("--csv")
    e.set_defaults(func=cmd_eval)

    rp = sub.add_parser("report", help="emit plot-ready CSVs from rollout logs")
    rp.add_argument("--log", required=True)
    rp.add_argument("--out", required=True)
    rp.set_defaults(func=cmd_report)

    c = sub.add_parser("config", help="print the effective configuration")
    c.add_argument("--config")
    c.add_argument("--format", choices=("toml", "json"), default="toml")
    c.add_argument("--out")
    c.set_defaults(func=cmd_config)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be at least 1")
    try:
        return args.func(args)
    except (ValidationError, ParseError) as exc:
        print(f"toolforge: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except FileNotFoundError as exc:
        print(f"toolforge: error: {exc.filename}: file not found", file=sys.stderr)
        return EXIT_INVALID
    except (ToolforgeError, OSError, RuntimeError, ValueError) as exc:
        print(f"toolforge: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
