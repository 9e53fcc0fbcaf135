"""Act by matching predicted outcomes: at every state pick the primitive whose
predicted next frame is closest (pixel MSE) to the predicted expert frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .grid import ACTIONS, Action, GridPos, TaskSpec, get_task, ground_truth_path_length, step
from .predictors.base import Kind, PredictorSet
from .render import RenderConfig, frame_mse, render, to_common_resolution

STEP_SLACK = 30


class PolicyMode(Enum):
    SINGLE_IMAGE = "single"
    SEQUENCE_FED = "sequence"


class EpisodeError(RuntimeError):
    def __init__(self, step_index: int, cause: Exception):
        super().__init__(f"step {step_index}: {type(cause).__name__}: {cause}")
        self.step_index = step_index


def first_min(errors) -> int:
    """Index of the first strict minimum; earlier entries win exact ties."""
    best = 0
    for i, e in enumerate(errors):
        if e < errors[best]:
            best = i
    return best


def select_action(expert_pred: np.ndarray, action_preds: dict) -> tuple[Action, tuple[float, ...]]:
    """Argmin of MSE to the expert prediction; the first strict minimum in
    canonical action order wins ties. Returns the action and all four errors."""
    errors = tuple(frame_mse(expert_pred, action_preds[a]) for a in ACTIONS)
    return ACTIONS[first_min(errors)], errors


@dataclass
class Trajectory:
    start: GridPos
    states: list[GridPos] = field(default_factory=list)
    actions: list[Action] = field(default_factory=list)
    errors: list[tuple[float, ...]] = field(default_factory=list)
    expert_frames: list[np.ndarray] = field(default_factory=list, repr=False)
    reached: bool = False

    @property
    def steps(self) -> int:
        return len(self.actions)

    @property
    def outcome(self) -> str:
        return "ReachedGoal" if self.reached else "Timeout"


def default_max_steps(task: TaskSpec, start: GridPos) -> int:
    return ground_truth_path_length(task, start) + STEP_SLACK


def run_episode(
    task: TaskSpec,
    start: GridPos,
    predictors: PredictorSet,
    mode: PolicyMode = PolicyMode.SEQUENCE_FED,
    max_steps: Optional[int] = None,
    cfg: RenderConfig = RenderConfig(),
    allow_oracle: bool = True,
) -> Trajectory:
    """Closed-loop rollout from ``start`` until the goal or ``max_steps``.

    The agent sees only armless renders of its own state. In single-image
    mode the expert predictor gets the current frame alone; in sequence-fed
    mode it gets every frame visited so far this episode.
    """
    task = get_task(task)
    if task.is_goal(start):
        raise ValueError("start equals goal")
    if not allow_oracle and Kind.ORACLE in predictors.kinds():
        raise ValueError("oracle predictors are not allowed in deployment runs")
    if max_steps is None:
        max_steps = default_max_steps(task, start)
    if max_steps < 1:
        raise ValueError("max_steps must be at least 1")
    for p in predictors.all():
        p.reset()

    traj = Trajectory(start, [start])
    history: list[np.ndarray] = []
    pos = start
    for i in range(max_steps):
        frame = render(pos, cfg, False)
        if mode is PolicyMode.SEQUENCE_FED:
            history.append(frame)
        else:
            history = [frame]
        try:
            expert = predictors.expert.predict(history)
            preds = [predictors.actions[a].predict([frame]) for a in ACTIONS]
            expert, *preds = to_common_resolution([expert, *preds])
            a, errs = select_action(expert, dict(zip(ACTIONS, preds)))
        except Exception as e:
            raise EpisodeError(i, e) from e
        pos = step(pos, a)
        traj.states.append(pos)
        traj.actions.append(a)
        traj.errors.append(errs)
        traj.expert_frames.append(expert)
        if task.is_goal(pos):
            traj.reached = True
            break
    return traj


def deviation(traj: Trajectory, task: TaskSpec) -> Optional[int]:
    """Extra steps over the expert's path length; None if the goal was never reached."""
    if not traj.reached:
        return None
    return traj.steps - ground_truth_path_length(get_task(task), traj.start)
