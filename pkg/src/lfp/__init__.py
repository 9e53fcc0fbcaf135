"""Learning from prediction on a small grid world.

An agent imitates an expert it has only watched: a predictor trained on the
expert's demonstrations forecasts the next frame, per-action predictors
forecast the agent's own outcomes, and the agent takes the action whose
forecast is closest in pixel MSE.
"""

from .grid import ACTIONS, Action, GridPos, TaskId, get_task, start_states, step
from .policy import PolicyMode, Trajectory, run_episode, select_action
from .render import RenderConfig, frame_mse, render

__version__ = "0.1.0"

__all__ = [
    "ACTIONS", "Action", "GridPos", "PolicyMode", "RenderConfig", "TaskId", "Trajectory",
    "frame_mse", "get_task", "render", "run_episode", "select_action", "start_states", "step",
]
