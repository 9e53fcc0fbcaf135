"""Command-line entry point: ``lfp demo-gen | train | eval | rollout``.

Exit codes: 0 ok, 1 other failure, 2 config or usage error, 3 I/O error,
4 training diverged, 5 model-load failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, load_run_config
from .dataset import TRAIN, VALIDATION, generate_all, load_dataset, save_dataset
from .grid import ACTIONS, GridPos, get_task
from .harness import export_report, format_summary, render_strip, sweep, write_step_errors
from .policy import EpisodeError, PolicyMode, run_episode
from .predictors import (
    AnalyticActionPredictor, AnalyticExpertPredictor, MotionField, NeuralPredictor,
    OracleActionPredictor, OracleExpertPredictor, PredictorSet, StateLookup, TrainingDiverged,
    build_motion_field, load_weights, neural_train, save_weights,
)
from .predictors import nn
from .predictors.base import Kind

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_IO, EXIT_TRAIN, EXIT_MODEL = 0, 1, 2, 3, 4, 5

MOTION_FIELD_FILE = "motion_field.json"
EXPERT_NAME = "expert"


class ModelLoadError(RuntimeError):
    pass


def weight_file(name: str) -> str:
    return f"{name}.w"


def log_file(name: str) -> str:
    return f"{name}_log.csv"


# ------------------------------------------------------------------ commands

def cmd_demo_gen(args, rc: RunConfig) -> int:
    out = Path(args.out or rc.out or "dataset")
    demos = generate_all(rc.demo_plan, rc.render)
    path = save_dataset(demos, out, rc.render, rc.seed)
    print(f"wrote {len(demos)} demonstrations to {path}")
    return EXIT_OK


def cmd_train(args, rc: RunConfig) -> int:
    out = Path(args.out or rc.out or "models")
    try:
        ds = load_dataset(args.data)
    except ValueError as e:
        raise OSError(f"dataset {args.data}: {e}") from e
    if ds.render_config != rc.render:
        raise ConfigError("dataset was rendered with a different render config than the run config")
    out.mkdir(parents=True, exist_ok=True)
    rc.save(out / "run_config.json")
    tc = rc.train

    def fit(name, tr, va):
        if not tr or not va:
            raise ConfigError(f"dataset has no training/validation demonstrations for {name}")
        try:
            w, log = neural_train(tr, va, tc)
        except TrainingDiverged as e:
            raise TrainingDiverged(f"{name}: {e}") from e
        save_weights(w, out / weight_file(name))
        log.write_csv(out / log_file(name))
        print(f"{name}: {len(log.epochs)} epochs, best epoch {log.best_epoch}, "
              f"final validation mse {log.best_val:.6g}")

    task = rc.task
    if rc.expert_kind is Kind.NEURAL:
        fit(EXPERT_NAME, ds.select(task, TRAIN), ds.select(task, VALIDATION))
    elif rc.expert_kind is Kind.ANALYTIC:
        field = build_motion_field(ds.select(task, TRAIN))
        if not field:
            raise ConfigError(f"dataset has no training demonstrations for {task.value}")
        field.save(out / MOTION_FIELD_FILE)
        print(f"{EXPERT_NAME}: motion field over {len(field)} cells written to {out / MOTION_FIELD_FILE}")
    if rc.action_kind is Kind.NEURAL:
        for a in ACTIONS:
            # primitive sweeps cover the reachable cells already, so they validate on themselves
            demos = ds.select(a, TRAIN)
            fit(a.value, demos, ds.select(a, VALIDATION) or demos)
    return EXIT_OK


def load_predictors(rc: RunConfig, models: Path | None) -> PredictorSet:
    lookup = None
    if Kind.ORACLE in (rc.expert_kind, rc.action_kind):
        lookup = StateLookup(rc.render)
    f = rc.train.downsample
    arch = nn.Architecture(rc.render.height // f, rc.render.width // f)

    def need_models():
        if models is None:
            raise ModelLoadError("--models is required for analytic and neural predictors")
        return models

    def neural(name, role):
        path = need_models() / weight_file(name)
        try:
            return NeuralPredictor(role, load_weights(path, arch), f)
        except (OSError, ValueError) as e:
            raise ModelLoadError(f"cannot load {path}: {e}") from e

    if rc.expert_kind is Kind.ORACLE:
        expert = OracleExpertPredictor(get_task(rc.task), rc.render, lookup)
    elif rc.expert_kind is Kind.ANALYTIC:
        path = need_models() / MOTION_FIELD_FILE
        try:
            expert = AnalyticExpertPredictor(rc.task, MotionField.load(path), rc.render)
        except (OSError, ValueError, KeyError, TypeError) as e:
            raise ModelLoadError(f"cannot load {path}: {e}") from e
    else:
        expert = neural(EXPERT_NAME, rc.task)

    actions = {}
    for a in ACTIONS:
        if rc.action_kind is Kind.ORACLE:
            actions[a] = OracleActionPredictor(a, rc.render, lookup)
        elif rc.action_kind is Kind.ANALYTIC:
            actions[a] = AnalyticActionPredictor(a, rc.render)
        else:
            actions[a] = neural(a.value, a)
    return PredictorSet(expert, actions)


def cmd_eval(args, rc: RunConfig) -> int:
    preds = load_predictors(rc, Path(args.models) if args.models else None)
    jobs = rc.jobs or os.cpu_count() or 1
    report = sweep(rc.task, preds, rc.mode, rc.render, jobs=jobs)
    report.check()
    export_report(report, args.report)
    print(format_summary(report))
    return EXIT_OK


def _parse_start(text: str) -> GridPos:
    try:
        x, y = (int(v) for v in text.split(","))
        return GridPos(x, y)
    except ValueError as e:
        raise ConfigError(f"--start expects X,Y inside the grid, got {text!r}") from e


def cmd_rollout(args, rc: RunConfig) -> int:
    start = _parse_start(args.start)
    task = get_task(rc.task)
    if task.is_goal(start):
        raise ConfigError("start equals goal")
    if start not in task.starts:
        raise ConfigError(f"{start} is not an eligible start for {task.id.value}")
    preds = load_predictors(rc, Path(args.models) if args.models else None)
    traj = run_episode(task, start, preds, rc.mode, cfg=rc.render)
    strip = Path(args.strip)
    errors = Path(args.errors) if args.errors else strip.with_name(strip.stem + "_errors.csv")
    render_strip(traj, strip, rc.render)
    write_step_errors(traj, errors)
    print(f"{traj.outcome} after {traj.steps} steps: "
          + " ".join(a.value for a in traj.actions))
    print(f"wrote {strip} and {errors}")
    return EXIT_OK


# ------------------------------------------------------------------- parser

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH",
                   help="JSON run config (default: $RUN_CONFIG, else built-in defaults)")
    p.add_argument("--task", choices=["PushPull", "MoveToPos"], help="override the config's task")
    p.add_argument("--seed", type=int, help="override the config's seed")


def _predictor_flags(p: argparse.ArgumentParser) -> None:
    kinds = [k.value for k in Kind]
    p.add_argument("--kind", choices=kinds, help="predictor kind for every role")
    p.add_argument("--expert-kind", choices=kinds, help="predictor kind for the expert predictor")
    p.add_argument("--action-kind", choices=kinds, help="predictor kind for the action predictors")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lfp", description="Generate demonstrations, train predictors, evaluate and roll out policies.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("demo-gen", help="render a demonstration dataset",
                       description="Render expert and action-primitive demonstrations to PPM frames plus manifest.json.")
    _common(p)
    p.add_argument("--out", metavar="DIR", help="dataset directory (default: config 'out', else ./dataset)")
    p.set_defaults(func=cmd_demo_gen)

    p = sub.add_parser("train", help="fit predictors on a dataset",
                       description="Build the motion field (analytic) or train the five networks (neural).")
    _common(p)
    _predictor_flags(p)
    p.add_argument("--data", metavar="DIR", required=True, help="dataset directory from demo-gen")
    p.add_argument("--out", metavar="DIR", help="model directory (default: config 'out', else ./models)")
    p.add_argument("--max-epochs", type=int, help="override the training epoch limit")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="sweep every start state and write a report",
                       description="Run one episode per eligible start and write report.csv.")
    _common(p)
    _predictor_flags(p)
    p.add_argument("--models", metavar="DIR", help="model directory from train (not needed for oracle)")
    p.add_argument("--report", metavar="PATH", default="report.csv", help="CSV report path (default: report.csv)")
    p.add_argument("--mode", choices=[m.value for m in PolicyMode], help="single-image or sequence-fed expert")
    p.add_argument("--jobs", type=int, help="worker processes (default: number of logical processors)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("rollout", help="run one episode and write an image strip",
                       description="Run a single episode, write the trajectory strip and per-step errors.")
    _common(p)
    _predictor_flags(p)
    p.add_argument("--models", metavar="DIR", help="model directory from train (not needed for oracle)")
    p.add_argument("--start", metavar="X,Y", required=True, help="start cell")
    p.add_argument("--strip", metavar="PATH", required=True, help="PPM path for the trajectory strip")
    p.add_argument("--errors", metavar="PATH", help="per-step error CSV (default: <strip>_errors.csv)")
    p.add_argument("--mode", choices=[m.value for m in PolicyMode], help="single-image or sequence-fed expert")
    p.set_defaults(func=cmd_rollout)
    return parser


def _overrides(args) -> dict:
    get = lambda name: getattr(args, name, None)
    preds = {}
    if get("kind"):
        preds = {"expert": args.kind, "actions": args.kind}
    if get("expert_kind"):
        preds["expert"] = args.expert_kind
    if get("action_kind"):
        preds["actions"] = args.action_kind
    train = {"max_epochs": args.max_epochs} if get("max_epochs") is not None else None
    return {"task": get("task"), "seed": get("seed"), "mode": get("mode"), "jobs": get("jobs"),
            "predictors": preds or None, "train": train}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        rc = load_run_config(args.config, _overrides(args))
        return args.func(args, rc)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDiverged as e:
        print(f"training diverged: {e}", file=sys.stderr)
        return EXIT_TRAIN
    except ModelLoadError as e:
        print(f"model load failed: {e}", file=sys.stderr)
        return EXIT_MODEL
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except EpisodeError as e:
        print(f"episode failed: {e}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
