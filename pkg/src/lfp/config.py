"""Versioned JSON run configuration shared by every command."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .dataset import DemoPlan, default_demo_plan
from .grid import TaskId
from .policy import PolicyMode
from .predictors.base import Kind
from .predictors.neural import TrainConfig
from .render import RenderConfig

CONFIG_VERSION = 1
ENV_VAR = "RUN_CONFIG"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    task: TaskId = TaskId.MOVE_TO_POS
    seed: int = 0
    mode: PolicyMode = PolicyMode.SEQUENCE_FED
    expert_kind: Kind = Kind.ANALYTIC
    action_kind: Kind = Kind.ANALYTIC
    render: RenderConfig = RenderConfig()
    plan: Optional[DemoPlan] = None  # None: the task's default plan
    train: TrainConfig = TrainConfig()
    out: Optional[str] = None
    jobs: Optional[int] = None  # None: one worker per logical processor

    def __post_init__(self):
        if self.plan is not None and self.plan.task is not self.task:
            raise ConfigError(f"demo plan is for {self.plan.task.value}, run is for {self.task.value}")
        if self.jobs is not None and self.jobs < 1:
            raise ConfigError("jobs must be positive")
        if self.train.seed != self.seed:
            object.__setattr__(self, "train", dataclasses.replace(self.train, seed=self.seed))

    @property
    def demo_plan(self) -> DemoPlan:
        return self.plan if self.plan is not None else default_demo_plan(self.task)

    def to_dict(self) -> dict:
        train = dataclasses.asdict(self.train)
        del train["seed"]
        return {
            "version": CONFIG_VERSION,
            "task": self.task.value,
            "seed": self.seed,
            "mode": self.mode.value,
            "predictors": {"expert": self.expert_kind.value, "actions": self.action_kind.value},
            "render": self.render.to_dict(),
            "demo_plan": None if self.plan is None else self.plan.to_dict(),
            "train": train,
            "out": self.out,
            "jobs": self.jobs,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(d) - {"version", "task", "seed", "mode", "predictors", "render",
                            "demo_plan", "train", "out", "jobs"}
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        if d.get("version") != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {d.get('version')!r} (expected {CONFIG_VERSION})")
        try:
            kw = {}
            if "task" in d:
                kw["task"] = TaskId(d["task"])
            if "seed" in d:
                kw["seed"] = _int(d["seed"], "seed", lo=0)
            if "mode" in d:
                kw["mode"] = PolicyMode(d["mode"])
            preds = d.get("predictors", {})
            if isinstance(preds, str):
                preds = {"expert": preds, "actions": preds}
            if set(preds) - {"expert", "actions"}:
                raise ConfigError("predictors takes only 'expert' and 'actions'")
            if "expert" in preds:
                kw["expert_kind"] = Kind(preds["expert"])
            if "actions" in preds:
                kw["action_kind"] = Kind(preds["actions"])
            if "render" in d:
                kw["render"] = RenderConfig.from_dict(d["render"])
            if d.get("demo_plan") is not None:
                kw["plan"] = DemoPlan.from_dict(d["demo_plan"])
            if "train" in d:
                kw["train"] = TrainConfig(**d["train"])
            if d.get("out") is not None:
                kw["out"] = str(d["out"])
            if d.get("jobs") is not None:
                kw["jobs"] = _int(d["jobs"], "jobs", lo=1)
            return cls(**kw)
        except ConfigError:
            raise
        except (ValueError, TypeError, KeyError) as e:
            raise ConfigError(f"invalid config: {e}") from e

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def _int(v, name: str, lo: int) -> int:
    if isinstance(v, bool) or not isinstance(v, int) or v < lo:
        raise ConfigError(f"{name} must be an integer >= {lo}, got {v!r}")
    return v


def load_run_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the file (``path`` or $RUN_CONFIG), then ``overrides``.

    ``overrides`` uses the file's key layout; None values are ignored.
    """
    if path is None:
        path = os.environ.get(ENV_VAR) or None
    d = {"version": CONFIG_VERSION}
    if path is not None:
        try:
            d = json.loads(Path(path).read_text())
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e.strerror or e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {path} is not valid JSON: {e}") from e
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
    for k, v in (overrides or {}).items():
        if v is None:
            continue
        if isinstance(v, dict) and isinstance(d.get(k), dict):
            d[k] = {**d[k], **v}
        else:
            d[k] = v
    return RunConfig.from_dict(d)
