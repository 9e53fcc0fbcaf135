"""
Acting by matching predictions
==============================

The policy compares the predicted expert frame with the predicted frame of
each of the agent's four moves and takes the closest. Here the predictors are
analytic: find the object, look up the move the expert made at the nearest
demonstrated cell, render the result.
"""

from lfp.dataset import default_demo_plan, generate_expert_demos
from lfp.grid import ACTIONS, GridPos, TaskId, get_task
from lfp.harness import format_summary, sweep
from lfp.policy import PolicyMode, run_episode
from lfp.predictors import (
    AnalyticActionPredictor, AnalyticExpertPredictor, PredictorSet, build_motion_field,
)
from lfp.render import RenderConfig

cfg = RenderConfig()
task = get_task(TaskId.PUSH_PULL)

# demonstrations cover rows 0, 2, 6 and 8; rows 1 and 7 are held out for validation
plan = default_demo_plan(task.id)
train = [d for d in generate_expert_demos(task.id, plan, cfg) if d.role == "train"]
field = build_motion_field(train)
print(len(field), "demonstrated cells")

predictors = PredictorSet(
    AnalyticExpertPredictor(task.id, field, cfg),
    {a: AnalyticActionPredictor(a, cfg) for a in ACTIONS},
)

# one episode from a row the expert never demonstrated
traj = run_episode(task, GridPos(9, 3), predictors, PolicyMode.SINGLE_IMAGE, cfg=cfg,
                   allow_oracle=False)
print(traj.outcome, traj.steps, "steps:", " ".join(a.value for a in traj.actions))
print("errors at the first step (Up, Down, Left, Right):",
      ", ".join(f"{e:.5f}" for e in traj.errors[0]))

# every start state
report = sweep(task, predictors, PolicyMode.SEQUENCE_FED, cfg)
print(format_summary(report))
