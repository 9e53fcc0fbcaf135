"""Full-sweep evaluation, first-state analysis, failure taxonomy, fault
injection, and CSV / image-strip exports.
"""

from __future__ import annotations

import csv
import io
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .grid import Action, GridPos, TaskId, TaskSpec, expert_action, get_task, start_states, step
from .policy import PolicyMode, Trajectory, deviation, run_episode
from .predictors.base import Predictor, PredictorSet
from .render import RenderConfig, downsample, render, upsample, write_ppm


class FailureType(Enum):
    TYPE_A = "TypeA"  # first deviating move was Right
    TYPE_B = "TypeB"  # first deviating move was Up
    OTHER = "Other"


@dataclass(frozen=True)
class StartRecord:
    start: GridPos
    reached: bool
    steps: int
    deviation: Optional[int]
    first_action: Action
    first_correct: bool
    failure_type: Optional[FailureType] = None

    @property
    def outcome(self) -> str:
        return "ReachedGoal" if self.reached else "Timeout"


def _pct(num: int, den: int) -> float:
    return 100.0 * num / den if den else 0.0


def aggregate(records: Sequence[StartRecord]) -> dict:
    """Success, deviation and first-step statistics; a pure function of the records."""
    n = len(records)
    ok = [r for r in records if r.reached]
    bad = [r for r in records if not r.reached]
    devs = [r.deviation for r in ok if r.deviation]
    counts = {t.value: 0 for t in FailureType}
    for r in bad:
        if r.failure_type is not None:
            counts[r.failure_type.value] += 1
    return {
        "n": n,
        "successes": len(ok),
        "success_pct": _pct(len(ok), n),
        "failure_pct": _pct(len(bad), n),
        "no_deviation_pct_of_successes": _pct(sum(r.deviation == 0 for r in ok), len(ok)),
        "no_deviation_pct_of_all": _pct(sum(r.deviation == 0 for r in ok), n),
        "deviated": len(devs),
        "deviation_median": statistics.median(devs) if devs else None,
        "deviation_max": max(devs) if devs else None,
        "deviation_min": min(devs) if devs else None,
        "first_correct_pct": _pct(sum(r.first_correct for r in records), n),
        "success_first_correct_pct": _pct(sum(r.first_correct for r in ok), len(ok)),
        "success_first_incorrect_pct": _pct(sum(not r.first_correct for r in ok), len(ok)),
        "failure_first_correct_pct": _pct(sum(r.first_correct for r in bad), len(bad)),
        "failure_first_incorrect_pct": _pct(sum(not r.first_correct for r in bad), len(bad)),
        "failure_types": counts,
    }


@dataclass
class EvalReport:
    task: TaskId
    mode: PolicyMode
    records: list[StartRecord]
    aggregates: dict = field(default_factory=dict)

    def __post_init__(self):
        self.records = sorted(self.records, key=lambda r: (r.start.y, r.start.x))
        if not self.aggregates:
            self.aggregates = aggregate(self.records)

    def check(self) -> None:
        starts = start_states(get_task(self.task))
        if [r.start for r in self.records] != starts:
            raise ValueError("records do not cover the task's start states exactly")
        if aggregate(self.records) != self.aggregates:
            raise ValueError("stored aggregates differ from a recomputation")


def first_deviation(traj: Trajectory, task: TaskSpec) -> Optional[Action]:
    """The first chosen action that differs from the expert's at that state."""
    for s, a in zip(traj.states, traj.actions):
        try:
            want = expert_action(task, s)
        except ValueError:
            # the agent left the task's defined region; the move that took it there already deviated
            return None
        if a is not want:
            return a
    return None


def classify_trajectory(traj: Trajectory, task: TaskSpec) -> Optional[FailureType]:
    if traj.reached:
        return None
    a = first_deviation(traj, task)
    if a is Action.RIGHT:
        return FailureType.TYPE_A
    if a is Action.UP:
        return FailureType.TYPE_B
    return FailureType.OTHER


def record_for(traj: Trajectory, task: TaskSpec) -> StartRecord:
    return StartRecord(
        start=traj.start,
        reached=traj.reached,
        steps=traj.steps,
        deviation=deviation(traj, task),
        first_action=traj.actions[0],
        first_correct=traj.actions[0] is expert_action(task, traj.start),
        failure_type=classify_trajectory(traj, task),
    )


def _episode_record(args) -> StartRecord:
    task, start, predictors, mode, cfg = args
    return record_for(run_episode(task, start, predictors, mode, cfg=cfg), task)


# per-worker copy of the sweep context, shipped once instead of with every start
_WORKER: dict = {}


def _init_worker(task, predictors, mode, cfg) -> None:
    _WORKER["ctx"] = (task, predictors, mode, cfg)


def _worker_record(start: GridPos) -> StartRecord:
    task, predictors, mode, cfg = _WORKER["ctx"]
    return _episode_record((task, start, predictors, mode, cfg))


def sweep(
    task: TaskSpec | TaskId | str,
    predictors: PredictorSet,
    mode: PolicyMode = PolicyMode.SEQUENCE_FED,
    cfg: RenderConfig = RenderConfig(),
    starts: Optional[Sequence[GridPos]] = None,
    jobs: int = 1,
) -> EvalReport:
    """One episode from every eligible start; records are ordered by (y, x).

    With ``jobs > 1`` episodes run in worker processes, each holding its own
    copy of the predictors.
    """
    task = get_task(task)
    starts = start_states(task) if starts is None else list(starts)
    if jobs > 1 and len(starts) > 1:
        with ProcessPoolExecutor(jobs, initializer=_init_worker,
                                 initargs=(task, predictors, mode, cfg)) as pool:
            records = list(pool.map(_worker_record, starts, chunksize=8))
    else:
        records = [_episode_record((task, s, predictors, mode, cfg)) for s in starts]
    return EvalReport(task.id, mode, records)


def first_state_analysis(report: EvalReport) -> dict:
    """First-step accuracy and its relation to trajectory outcome."""
    a = report.aggregates
    return {
        "correct_first_predictions_pct": a["first_correct_pct"],
        "successful_with_correct_first_pct": a["success_first_correct_pct"],
        "successful_with_incorrect_first_pct": a["success_first_incorrect_pct"],
        "unsuccessful_with_correct_first_pct": a["failure_first_correct_pct"],
        "unsuccessful_with_incorrect_first_pct": a["failure_first_incorrect_pct"],
    }


def classify_failures(report: EvalReport) -> dict[FailureType, int]:
    counts = {t: 0 for t in FailureType}
    for r in report.records:
        if not r.reached:
            counts[r.failure_type or FailureType.OTHER] += 1
    return counts


# ------------------------------------------------------------ fault injection

# A rule sees the agent's frames so far this episode (oldest first) and may
# return a replacement prediction.
FaultRule = Callable[[list], Optional[np.ndarray]]


class FaultyPredictor(Predictor):
    """Wraps a predictor and overrides its output wherever ``rule`` fires."""

    def __init__(self, inner: Predictor, rule: FaultRule):
        self.inner = inner
        self.rule = rule
        self.kind = inner.kind
        self.role = inner.role
        self._seen: list[np.ndarray] = []

    def reset(self) -> None:
        self._seen = []
        self.inner.reset()

    def predict(self, history):
        self._seen.append(history[-1])
        out = self.inner.predict(history)
        override = self.rule(self._seen)
        if override is None:
            return out
        if override.shape != out.shape:
            override = downsample(override, override.shape[1] // out.shape[1])
        return override


def inject_fault(predictors: PredictorSet, expert_rule: Optional[FaultRule] = None,
                 action_rules: Optional[dict] = None) -> PredictorSet:
    action_rules = action_rules or {}
    expert = predictors.expert if expert_rule is None else FaultyPredictor(predictors.expert, expert_rule)
    actions = {
        a: (p if a not in action_rules else FaultyPredictor(p, action_rules[a]))
        for a, p in predictors.actions.items()
    }
    return PredictorSet(expert, actions)


def _locator(cfg: RenderConfig):
    from .predictors.base import localize_object

    return lambda f: localize_object(f, cfg)


def delay_at_column_rule(cfg: RenderConfig = RenderConfig(), column: int = 14,
                         action: Action = Action.RIGHT) -> FaultRule:
    """On first arriving at ``column`` (below the top row) predict ``action`` once.

    With the default Right this makes the predicted expert frame equal the
    current one (the move is clamped), delaying the turn upwards by a step.
    """
    locate = _locator(cfg)

    def rule(seen):
        pos = locate(seen[-1])
        if pos.x != column or pos.y == 8:
            return None
        if len(seen) > 1 and locate(seen[-2]).x == column:
            return None
        return render(step(pos, action), cfg)

    return rule


def wrong_first_move_rule(starts: Sequence[GridPos], cfg: RenderConfig = RenderConfig(),
                          action: Action = Action.RIGHT) -> FaultRule:
    """For episodes starting in ``starts`` always predict the expert moving ``action``."""
    locate = _locator(cfg)
    starts = frozenset(starts)

    def rule(seen):
        if locate(seen[0]) not in starts:
            return None
        return render(step(locate(seen[-1]), action), cfg)

    return rule


# ------------------------------------------------------------------ exports

REPORT_COLUMNS = ["task", "mode", "start_x", "start_y", "outcome", "steps", "deviation",
                  "first_action", "first_correct", "failure_type"]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.1f}"
    return str(v)


def report_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in report.records:
        w.writerow([
            report.task.value, report.mode.value, r.start.x, r.start.y, r.outcome, r.steps,
            _fmt(r.deviation), r.first_action.value, int(r.first_correct),
            r.failure_type.value if r.failure_type else "",
        ])
    for key, value in aggregate_rows(report):
        w.writerow(["aggregate", key, value])
    return buf.getvalue()


def aggregate_rows(report: EvalReport) -> list[tuple[str, str]]:
    rows = []
    for k, v in report.aggregates.items():
        if isinstance(v, dict):
            rows.extend((f"{k}.{kk}", _fmt(vv)) for kk, vv in v.items())
        else:
            rows.append((k, _fmt(v)))
    return rows


def export_report(report: EvalReport, path: str | Path) -> None:
    Path(path).write_text(report_csv(report))


def format_summary(report: EvalReport) -> str:
    """Human-readable summary of a report."""
    a = report.aggregates
    fs = first_state_analysis(report)

    def dev(k):
        return "-" if a[k] is None else _fmt(a[k])

    lines = [
        f"task {report.task.value}, mode {report.mode.value}, {a['n']} start states",
        f"  successful trajectories                     {a['success_pct']:.1f}%",
        f"  no deviation (of successful)                {a['no_deviation_pct_of_successes']:.1f}%",
        f"  no deviation (of all)                       {a['no_deviation_pct_of_all']:.1f}%",
        f"  deviation length                            median {dev('deviation_median')}, "
        f"max {dev('deviation_max')}, min {dev('deviation_min')}",
        f"  correct first-state action                  {fs['correct_first_predictions_pct']:.1f}%",
        f"  successful, correct first prediction        {fs['successful_with_correct_first_pct']:.1f}%",
        f"  successful, incorrect first prediction      {fs['successful_with_incorrect_first_pct']:.1f}%",
        f"  unsuccessful, correct first prediction      {fs['unsuccessful_with_correct_first_pct']:.1f}%",
        f"  unsuccessful, incorrect first prediction    {fs['unsuccessful_with_incorrect_first_pct']:.1f}%",
        "  failure types                               "
        + ", ".join(f"{k} {v}" for k, v in a["failure_types"].items()),
    ]
    return "\n".join(lines)


def strip_image(traj: Trajectory, cfg: RenderConfig = RenderConfig()) -> np.ndarray:
    """Per-step current frames with the predicted expert frame blended at 50%."""
    tiles = []
    for s, pred in zip(traj.states, traj.expert_frames):
        cur = render(s, cfg, False)
        if pred.shape != cur.shape:
            pred = upsample(pred, cur.shape[1] // pred.shape[1])
        blend = (cur.astype(np.uint16) + pred.astype(np.uint16) + 1) // 2
        tiles.append(blend.astype(np.uint8))
    if not tiles:
        raise ValueError("trajectory has no steps")
    return np.concatenate(tiles, axis=1)


def render_strip(traj: Trajectory, path: str | Path, cfg: RenderConfig = RenderConfig()) -> np.ndarray:
    img = strip_image(traj, cfg)
    write_ppm(path, img)
    return img


def write_step_errors(traj: Trajectory, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "x", "y", "action", "err_up", "err_down", "err_left", "err_right"])
        for i, (s, a, e) in enumerate(zip(traj.states, traj.actions, traj.errors)):
            w.writerow([i, s.x, s.y, a.value, *(repr(v) for v in e)])
