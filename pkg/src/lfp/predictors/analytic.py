"""Localize-and-render predictors.

The expert predictor generalises from demonstrations through a motion
field: the move observed at each demonstrated cell, applied at the nearest
demonstrated cell (L1 distance) to wherever the object currently is.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..dataset import Demonstration
from ..grid import ACTIONS, Action, GridPos, TaskId, action_between, step
from ..render import RenderConfig, render
from .base import Kind, Predictor, localize_object


class MotionField(dict):
    """GridPos -> Action, learned from consecutive demonstrated states only."""

    def nearest_action(self, pos: GridPos) -> Action:
        if not self:
            raise ValueError("motion field is empty")
        if pos in self:
            return self[pos]
        best = min(abs(c.x - pos.x) + abs(c.y - pos.y) for c in self)
        tied = [c for c in self if abs(c.x - pos.x) + abs(c.y - pos.y) == best]
        # canonical action order first, then lowest (y, x) cell
        c = min(tied, key=lambda c: (ACTIONS.index(self[c]), c.y, c.x))
        return self[c]

    def to_json(self) -> str:
        rows = [[c.x, c.y, a.value] for c, a in sorted(self.items(), key=lambda kv: (kv[0].y, kv[0].x))]
        return json.dumps({"motion_field": rows})

    @classmethod
    def from_json(cls, text: str) -> "MotionField":
        return cls({GridPos(x, y): Action(a) for x, y, a in json.loads(text)["motion_field"]})

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "MotionField":
        return cls.from_json(Path(path).read_text())


def build_motion_field(demos: Iterable[Demonstration]) -> MotionField:
    field = MotionField()
    labels = set()
    for d in demos:
        labels.add(d.label)
        if len(labels) > 1:
            raise ValueError(f"demonstrations mix labels: {sorted(l.value for l in labels)}")
        for a, b in zip(d.states, d.states[1:]):
            act = action_between(a, b)
            if act is None:
                # a clamped no-op carries no direction
                continue
            if field.get(a, act) is not act:
                raise ValueError(f"conflicting moves recorded at {a}: {field[a].value} and {act.value}")
            field[a] = act
    return field


class AnalyticExpertPredictor(Predictor):
    kind = Kind.ANALYTIC

    def __init__(self, task: TaskId, field: MotionField, cfg: RenderConfig = RenderConfig()):
        if not field:
            raise ValueError("motion field is empty")
        self.role = TaskId(task)
        self.field = field
        self.cfg = cfg

    def predict(self, history: Sequence[np.ndarray]) -> np.ndarray:
        pos = localize_object(history[-1], self.cfg)
        return render(step(pos, self.field.nearest_action(pos)), self.cfg)


class AnalyticActionPredictor(Predictor):
    kind = Kind.ANALYTIC

    def __init__(self, action: Action, cfg: RenderConfig = RenderConfig()):
        self.role = action
        self.cfg = cfg

    def predict(self, history: Sequence[np.ndarray]) -> np.ndarray:
        return render(step(localize_object(history[-1], self.cfg), self.role), self.cfg)


def analytic_expert_predict(f: np.ndarray, field: MotionField, cfg: RenderConfig = RenderConfig()) -> np.ndarray:
    pos = localize_object(f, cfg)
    return render(step(pos, field.nearest_action(pos)), cfg)


def analytic_action_predict(f: np.ndarray, a: Action, cfg: RenderConfig = RenderConfig()) -> np.ndarray:
    return render(step(localize_object(f, cfg), a), cfg)
