"""Demonstration generation, demo plans, and on-disk datasets.

A dataset directory holds ``manifest.json`` plus one sub-directory per
demonstration with ``frame_%04d.ppm`` files. Only states and frames are
stored; expert action labels never are.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from .grid import ACTIONS, Action, GridPos, TaskId, TaskSpec, expert_path, get_task, step
from .render import RenderConfig, decode_ppm, encode_ppm, render

Label = Union[TaskId, Action]

TRAIN = "train"
VALIDATION = "validation"
ROLES = (TRAIN, VALIDATION)


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


@dataclass
class Demonstration:
    label: Label
    states: list[GridPos]
    frames: list[np.ndarray] = field(repr=False)
    arm_visible: bool = False
    role: str = TRAIN

    def __post_init__(self):
        if len(self.states) != len(self.frames):
            raise ValueError("states and frames differ in length")
        if len(self.states) < 2:
            raise ValueError("a demonstration needs at least two states")
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        for a, b in zip(self.states, self.states[1:]):
            if a != b and abs(a.x - b.x) + abs(a.y - b.y) != 1:
                raise ValueError(f"{a} -> {b} is not a single 4-connected move")

    def __len__(self):
        return len(self.states)


@dataclass(frozen=True)
class Sweep:
    """Repeated application of ``action`` from ``start`` until the grid edge."""

    start: GridPos
    action: Action

    def states(self) -> list[GridPos]:
        out = [self.start]
        while (nxt := step(out[-1], self.action)) != out[-1]:
            out.append(nxt)
        return out


@dataclass(frozen=True)
class DemoPlan:
    task: TaskId
    train_starts: tuple[GridPos, ...]
    val_starts: tuple[GridPos, ...]
    sweeps: dict = field(default_factory=dict)  # Action -> tuple[Sweep, Sweep]

    def __post_init__(self):
        overlap = set(self.train_starts) & set(self.val_starts)
        if overlap:
            raise ValueError(f"train and validation starts overlap: {sorted(overlap)}")
        starts = get_task(self.task).starts
        seen = set(self.train_starts) | set(self.val_starts)
        if not seen < starts:
            bad = sorted(seen - starts)
            if bad:
                raise ValueError(f"starts not eligible for {self.task.value}: {bad}")
            raise ValueError("the plan must hold out at least one eligible start")
        for a, sw in self.sweeps.items():
            if any(s.action is not a for s in sw):
                raise ValueError(f"sweep for {a.value} uses a different action")

    def to_dict(self) -> dict:
        return {
            "task": self.task.value,
            "train_starts": [list(p) for p in self.train_starts],
            "val_starts": [list(p) for p in self.val_starts],
            "sweeps": {a.value: [list(s.start) for s in sw] for a, sw in self.sweeps.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DemoPlan":
        sweeps = {}
        for name, starts in d.get("sweeps", {}).items():
            a = Action(name)
            sweeps[a] = tuple(Sweep(GridPos(*s), a) for s in starts)
        return cls(
            TaskId(d["task"]),
            tuple(GridPos(*p) for p in d["train_starts"]),
            tuple(GridPos(*p) for p in d["val_starts"]),
            sweeps,
        )


def _sweeps(a: Action, *starts: tuple[int, int]) -> tuple[Sweep, ...]:
    return tuple(Sweep(GridPos(*s), a) for s in starts)


def default_demo_plan(task: TaskId | str) -> DemoPlan:
    """Reconstructed demonstration layout for ``task``.

    PushPull trains on rows 0, 2, 6, 8 (starting from the far column),
    validates on rows 1 and 7 and never shows rows 3 and 5. MoveToPos
    trains on starts (0,0), (0,8), (7,0) and validates on (0,4).

    Primitive sweeps are placed on the rows/columns the task's own training
    demonstrations travel along.
    """
    task = TaskId(task)
    if task is TaskId.PUSH_PULL:
        return DemoPlan(
            task,
            train_starts=(GridPos(14, 0), GridPos(14, 2), GridPos(0, 6), GridPos(0, 8)),
            val_starts=(GridPos(14, 1), GridPos(0, 7)),
            sweeps={
                Action.UP: _sweeps(Action.UP, (0, 0), (14, 0)),
                Action.DOWN: _sweeps(Action.DOWN, (0, 8), (14, 8)),
                Action.LEFT: _sweeps(Action.LEFT, (14, 0), (14, 2)),
                Action.RIGHT: _sweeps(Action.RIGHT, (0, 6), (0, 8)),
            },
        )
    return DemoPlan(
        task,
        train_starts=(GridPos(0, 0), GridPos(0, 8), GridPos(7, 0)),
        val_starts=(GridPos(0, 4),),
        sweeps={
            Action.UP: _sweeps(Action.UP, (14, 0), (0, 0)),
            Action.DOWN: _sweeps(Action.DOWN, (0, 8), (14, 8)),
            Action.LEFT: _sweeps(Action.LEFT, (14, 4), (14, 6)),
            Action.RIGHT: _sweeps(Action.RIGHT, (0, 0), (0, 8)),
        },
    )


def generate_expert_demos(
    task: TaskSpec | TaskId | str, plan: DemoPlan, cfg: RenderConfig = RenderConfig()
) -> list[Demonstration]:
    task = get_task(task)
    demos = []
    for role, starts in ((TRAIN, plan.train_starts), (VALIDATION, plan.val_starts)):
        for s in starts:
            if s not in task.starts:
                raise ValueError(f"{s} is not an eligible start for {task.id.value}")
            states = expert_path(task, s)
            frames = [render(p, cfg, cfg.arm_enabled) for p in states]
            demos.append(Demonstration(task.id, states, frames, cfg.arm_enabled, role))
    return demos


def generate_primitive_demos(
    a: Action, plan: DemoPlan, cfg: RenderConfig = RenderConfig()
) -> list[Demonstration]:
    sweeps = plan.sweeps.get(a, ())
    if len(sweeps) != 2:
        raise ValueError(f"plan must hold exactly two sweeps for {a.value}, found {len(sweeps)}")
    demos = []
    for sw in sweeps:
        states = sw.states()
        if len(states) < 2:
            raise ValueError(f"sweep {sw} starts at the edge and never moves")
        demos.append(Demonstration(a, states, [render(p, cfg, False) for p in states], False, TRAIN))
    return demos


def generate_all(plan: DemoPlan, cfg: RenderConfig = RenderConfig()) -> list[Demonstration]:
    demos = generate_expert_demos(plan.task, plan, cfg)
    for a in ACTIONS:
        demos.extend(generate_primitive_demos(a, plan, cfg))
    return demos


# ------------------------------------------------------------------- on disk

def _label_to_str(label: Label) -> str:
    return label.value


def _label_from_str(s: str) -> Label:
    for enum in (TaskId, Action):
        try:
            return enum(s)
        except ValueError:
            pass
    raise ValueError(f"unknown demonstration label {s!r}")


def save_dataset(
    demos: list[Demonstration], out_dir: str | Path, cfg: RenderConfig, seed: int = 0
) -> Path:
    """Write frames and ``manifest.json`` under ``out_dir``; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, d in enumerate(demos):
        sub = f"demo_{i:03d}"
        (out_dir / sub).mkdir(exist_ok=True)
        frames = []
        for j, f in enumerate(d.frames):
            rel = f"{sub}/frame_{j:04d}.ppm"
            data = encode_ppm(f)
            (out_dir / rel).write_bytes(data)
            frames.append({"path": rel, "fnv1a64": f"{fnv1a64(data):016x}"})
        entries.append({
            "label": _label_to_str(d.label),
            "role": d.role,
            "arm_visible": d.arm_visible,
            "states": [[p.x, p.y] for p in d.states],
            "frames": frames,
        })
    manifest = {"render_config": cfg.to_dict(), "seed": seed, "demos": entries}
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1) + "\n")
    return path


@dataclass
class Dataset:
    render_config: RenderConfig
    seed: int
    demos: list[Demonstration]

    def select(self, label: Label, role: str | None = None) -> list[Demonstration]:
        return [d for d in self.demos if d.label == label and (role is None or d.role == role)]


def load_dataset(path: str | Path, verify_render: bool = True) -> Dataset:
    """Load a dataset from a manifest file or the directory containing it.

    Every frame is hash- and size-checked; with ``verify_render`` every frame
    is also compared byte-for-byte against a fresh render of its state.
    """
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    root = path.parent
    try:
        manifest = json.loads(path.read_text())
        cfg = RenderConfig.from_dict(manifest["render_config"])
        seed = int(manifest["seed"])
        entries = manifest["demos"]
    except (KeyError, TypeError, json.JSONDecodeError) as e:
        raise ValueError(f"malformed manifest {path}: {e}") from e
    demos = []
    for k, e in enumerate(entries):
        try:
            label = _label_from_str(e["label"])
            states = [GridPos(*s) for s in e["states"]]
            refs = e["frames"]
            arm = bool(e["arm_visible"])
            role = e["role"]
        except (KeyError, TypeError) as err:
            raise ValueError(f"malformed entry {k} in {path}: {err}") from err
        if len(refs) != len(states):
            raise ValueError(f"demo {k}: {len(refs)} frames for {len(states)} states")
        frames = []
        for ref, p in zip(refs, states):
            fp = root / ref["path"]
            if not fp.is_file():
                raise FileNotFoundError(f"demo {k}: missing frame file {fp}")
            data = fp.read_bytes()
            if f"{fnv1a64(data):016x}" != ref["fnv1a64"]:
                raise ValueError(f"demo {k}: checksum mismatch for {fp}")
            f = decode_ppm(data)
            if f.shape != (cfg.height, cfg.width, 3):
                raise ValueError(f"demo {k}: {fp} has size {f.shape[1]}x{f.shape[0]}")
            if verify_render and not np.array_equal(f, render(p, cfg, arm)):
                raise ValueError(f"demo {k}: {fp} does not match a re-render of {p}")
            frames.append(f)
        demos.append(Demonstration(label, states, frames, arm, role))
    return Dataset(cfg, seed, demos)
