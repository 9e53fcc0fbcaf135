"""Ground-truth predictors for tests and harness baselines.

These recover the true state by exact lookup of the rendered frame and then
consult the simulator (and, for the expert, the task's hidden policy). They
are never allowed in deployment runs.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..grid import Action, GridPos, TaskSpec, all_cells, expert_action, get_task, step
from ..render import RenderConfig, render
from .base import Kind, Predictor


class StateLookup:
    """Exact frame -> GridPos table over every cell, with and without the arm."""

    def __init__(self, cfg: RenderConfig):
        self.cfg = cfg
        self._table: dict[bytes, GridPos] = {}
        for p in all_cells():
            for arm in (False, True):
                self._table[render(p, cfg, arm).tobytes()] = p

    def __call__(self, f: np.ndarray) -> GridPos:
        try:
            return self._table[f.tobytes()]
        except KeyError:
            raise ValueError("frame is not an exact render of any grid state") from None


class OracleExpertPredictor(Predictor):
    kind = Kind.ORACLE

    def __init__(self, task: TaskSpec, cfg: RenderConfig = RenderConfig(), lookup: StateLookup | None = None):
        self.task = get_task(task)
        self.role = self.task.id
        self.cfg = cfg
        self.lookup = lookup or StateLookup(cfg)

    def predict(self, history: Sequence[np.ndarray]) -> np.ndarray:
        pos = self.lookup(history[-1])
        a = expert_action(self.task, pos)
        return render(pos if a is None else step(pos, a), self.cfg)

    def predict_pos(self, pos: GridPos) -> np.ndarray:
        a = expert_action(self.task, pos)
        return render(pos if a is None else step(pos, a), self.cfg)


class OracleActionPredictor(Predictor):
    kind = Kind.ORACLE

    def __init__(self, action: Action, cfg: RenderConfig = RenderConfig(), lookup: StateLookup | None = None):
        self.role = action
        self.cfg = cfg
        self.lookup = lookup or StateLookup(cfg)

    def predict(self, history: Sequence[np.ndarray]) -> np.ndarray:
        return self.predict_pos(self.lookup(history[-1]))

    def predict_pos(self, pos: GridPos) -> np.ndarray:
        return render(step(pos, self.role), self.cfg)
