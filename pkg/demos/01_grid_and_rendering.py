"""
The grid world and its pictures
===============================

A 15 x 9 grid, an object on one cell, four moves that clamp at the edges.
The agent never sees coordinates, only rendered frames, so most of this
script is about the renderer.
"""

import numpy as np

from lfp.grid import Action, GridPos, TaskId, expert_path, get_task, start_states, step
from lfp.render import RenderConfig, downsample, frame_mse, render, write_ppm

cfg = RenderConfig()

# moves are deterministic and clamp at the border
print(step(GridPos(3, 4), Action.RIGHT), step(GridPos(0, 0), Action.LEFT))

# the two tasks and how many places an episode can start from
for task_id in TaskId:
    task = get_task(task_id)
    print(task_id.value, len(start_states(task)), "starts")

# the hidden expert: push along the row in PushPull, right-then-up in MoveToPos
print(expert_path(get_task("PushPull"), GridPos(2, 6))[-1])
print(expert_path(get_task("MoveToPos"), GridPos(0, 0))[-1])

# frames are uint8 RGB; expert demonstrations can show an arm occluder
plain = render(GridPos(7, 5), cfg)
arm_cfg = RenderConfig(arm_enabled=True)
with_arm = render(GridPos(7, 5), arm_cfg, arm_visible=True)
print(plain.shape, plain.dtype, "arm changes", int(np.any(plain != with_arm, axis=2).sum()), "pixels")

# the pixel metric the policy uses
print("neighbour mse", frame_mse(plain, render(GridPos(8, 5), cfg)))
print("same-frame mse", frame_mse(plain, plain))

# neural predictors work at half resolution
print("downsampled", downsample(plain, 2).shape)

write_ppm("frame_7_5.ppm", with_arm)
print("wrote frame_7_5.ppm")
