from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence, Union

import numpy as np

from ..grid import ACTIONS, GRID_H, GRID_W, Action, GridPos, TaskId
from ..render import RenderConfig

Role = Union[TaskId, Action]

# Euclidean RGB distance for a pixel to count as "object coloured"
OBJECT_TOLERANCE = 60.0


class Kind(Enum):
    ORACLE = "oracle"
    ANALYTIC = "analytic"
    NEURAL = "neural"


class ObjectNotFound(ValueError):
    pass


class Predictor:
    """Maps an observed frame history (oldest first) to a predicted next frame.

    ``role`` is a TaskId for an expert predictor and an Action for an
    action-primitive predictor. Subclasses that keep per-episode state
    override :meth:`reset`.
    """

    kind: Kind
    role: Role

    def predict(self, history: Sequence[np.ndarray]) -> np.ndarray:
        raise NotImplementedError

    def reset(self) -> None:
        pass


@dataclass
class PredictorSet:
    expert: Predictor
    actions: dict  # Action -> Predictor

    def __post_init__(self):
        if tuple(self.actions) != ACTIONS:
            self.actions = {a: self.actions[a] for a in ACTIONS}

    def all(self) -> list[Predictor]:
        return [self.expert, *self.actions.values()]

    def kinds(self) -> set[Kind]:
        return {p.kind for p in self.all()}


def localize_object(f: np.ndarray, cfg: RenderConfig, tol: float = OBJECT_TOLERANCE) -> GridPos:
    """Cell whose centre is nearest the centroid of object-coloured pixels."""
    if f.shape != (cfg.height, cfg.width, 3):
        raise ValueError(f"frame of shape {f.shape} does not match the render config")
    d = f.astype(np.float64) - np.asarray(cfg.object_color, dtype=np.float64)
    rows, cols = np.nonzero(np.einsum("ijk,ijk->ij", d, d) <= tol * tol)
    if rows.size == 0:
        raise ObjectNotFound("object not found")
    cy = rows.mean() + 0.5
    cx = cols.mean() + 0.5
    # centres sit at (k + 1/2) * cell_px, so the nearest one is the enclosing cell
    x = int(np.clip(np.floor(cx / cfg.cell_px), 0, GRID_W - 1))
    row = int(np.clip(np.floor(cy / cfg.cell_px), 0, GRID_H - 1))
    return GridPos(x, GRID_H - 1 - row)
