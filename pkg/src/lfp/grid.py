"""Discrete 15x9 table-top grid: states, agent dynamics and the two tasks.

Coordinates: ``x`` grows rightward (0..14), ``y`` grows upward (0..8),
origin at the bottom-left cell.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, FrozenSet, Optional

GRID_W = 15
GRID_H = 9


@dataclass(frozen=True, order=True)
class GridPos:
    x: int
    y: int

    def __post_init__(self):
        if not (isinstance(self.x, int) and isinstance(self.y, int)):
            raise TypeError(f"grid coordinates must be ints, got ({self.x!r}, {self.y!r})")
        if not (0 <= self.x < GRID_W and 0 <= self.y < GRID_H):
            raise ValueError(f"({self.x}, {self.y}) is outside the {GRID_W}x{GRID_H} grid")

    def __iter__(self):
        yield self.x
        yield self.y

    def __repr__(self):
        return f"GridPos({self.x}, {self.y})"


def all_cells() -> list[GridPos]:
    """Every cell, ordered by (y, x)."""
    return [GridPos(x, y) for y in range(GRID_H) for x in range(GRID_W)]


class Action(Enum):
    # definition order is the canonical order used for iteration and tie-breaks
    UP = "Up"
    DOWN = "Down"
    LEFT = "Left"
    RIGHT = "Right"

    @property
    def delta(self) -> tuple[int, int]:
        return _DELTAS[self]


ACTIONS: tuple[Action, ...] = tuple(Action)

_DELTAS = {
    Action.UP: (0, 1),
    Action.DOWN: (0, -1),
    Action.LEFT: (-1, 0),
    Action.RIGHT: (1, 0),
}


class TaskId(Enum):
    PUSH_PULL = "PushPull"
    MOVE_TO_POS = "MoveToPos"


def step(pos: GridPos, a: Action) -> GridPos:
    """4-connected move; moves off the grid leave the object where it is."""
    dx, dy = a.delta
    x = min(max(pos.x + dx, 0), GRID_W - 1)
    y = min(max(pos.y + dy, 0), GRID_H - 1)
    return GridPos(x, y)


def action_between(a: GridPos, b: GridPos) -> Optional[Action]:
    """The unique action moving ``a`` to ``b`` in one step, or None."""
    for act in ACTIONS:
        if a != b and step(a, act) == b:
            return act
    return None


# PushPull rows: upper half pushes right, lower half pulls left, middle row unused
PUSH_PULL_MIDDLE_ROW = 4
MOVE_TO_POS_GOAL = GridPos(GRID_W - 1, GRID_H - 1)


def _push_pull_policy(pos: GridPos) -> Optional[Action]:
    if pos.y == PUSH_PULL_MIDDLE_ROW:
        raise ValueError(f"PushPull is undefined on the middle row (y={PUSH_PULL_MIDDLE_ROW})")
    if pos.y > PUSH_PULL_MIDDLE_ROW:
        return Action.RIGHT if pos.x < GRID_W - 1 else None
    return Action.LEFT if pos.x > 0 else None


def _push_pull_goal(pos: GridPos) -> bool:
    if pos.y == PUSH_PULL_MIDDLE_ROW:
        return False
    return pos.x == (GRID_W - 1 if pos.y > PUSH_PULL_MIDDLE_ROW else 0)


def _move_to_pos_policy(pos: GridPos) -> Optional[Action]:
    # right first, then up the last column
    if pos.x < GRID_W - 1:
        return Action.RIGHT
    if pos.y < GRID_H - 1:
        return Action.UP
    return None


@dataclass(frozen=True)
class TaskSpec:
    """A task: its goal test, eligible start cells and ground-truth expert."""

    id: TaskId
    is_goal: Callable[[GridPos], bool] = field(repr=False)
    starts: FrozenSet[GridPos] = field(repr=False)
    policy: Callable[[GridPos], Optional[Action]] = field(repr=False)

    def __reduce__(self):
        # the registered tasks are singletons; pickle by id
        return get_task, (self.id,)


def _make_push_pull() -> TaskSpec:
    starts = frozenset(
        p for p in all_cells() if p.y != PUSH_PULL_MIDDLE_ROW and not _push_pull_goal(p)
    )
    return TaskSpec(TaskId.PUSH_PULL, _push_pull_goal, starts, _push_pull_policy)


def _move_to_pos_goal(pos: GridPos) -> bool:
    return pos == MOVE_TO_POS_GOAL


def _make_move_to_pos() -> TaskSpec:
    starts = frozenset(p for p in all_cells() if p != MOVE_TO_POS_GOAL)
    return TaskSpec(TaskId.MOVE_TO_POS, _move_to_pos_goal, starts, _move_to_pos_policy)


TASKS: dict[TaskId, TaskSpec] = {
    TaskId.PUSH_PULL: _make_push_pull(),
    TaskId.MOVE_TO_POS: _make_move_to_pos(),
}


def get_task(task: TaskId | str | TaskSpec) -> TaskSpec:
    if isinstance(task, TaskSpec):
        return task
    return TASKS[TaskId(task)]


def expert_action(task: TaskSpec, pos: GridPos) -> Optional[Action]:
    """Ground-truth expert move at ``pos``; None at goal states."""
    return task.policy(pos)


def start_states(task: TaskSpec) -> list[GridPos]:
    """Eligible start cells sorted by (y, x)."""
    return sorted(task.starts, key=lambda p: (p.y, p.x))


def expert_path(task: TaskSpec, start: GridPos, limit: int = 100) -> list[GridPos]:
    """States visited by the expert from ``start`` up to and including the goal."""
    path = [start]
    pos = start
    while (a := expert_action(task, pos)) is not None:
        pos = step(pos, a)
        path.append(pos)
        if len(path) > limit:
            raise RuntimeError(f"expert from {start} did not reach a goal in {limit} steps")
    return path


def ground_truth_path_length(task: TaskSpec, start: GridPos) -> int:
    return len(expert_path(task, start)) - 1
