"""
Learning the predictors from pixels
===================================

Five small conv-recurrent networks: one for the expert, one per move. The
script trains them on the default PushPull plan (a few minutes on one CPU),
then checks how often the policy reproduces the demonstrated moves and runs
a full sweep. Pass a number to cap the epochs for a quicker, rougher run.
"""

import sys
import time

import numpy as np

from lfp.dataset import default_demo_plan, generate_expert_demos, generate_primitive_demos
from lfp.grid import ACTIONS, TaskId, action_between, get_task
from lfp.harness import format_summary, sweep
from lfp.policy import PolicyMode, select_action
from lfp.predictors import NeuralPredictor, NeuralWeights, PredictorSet, TrainConfig, gradient_check, neural_train
from lfp.predictors.neural import make_windows
from lfp.render import RenderConfig

max_epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 500
cfg = RenderConfig()
task = get_task(TaskId.PUSH_PULL)
plan = default_demo_plan(task.id)
tc = TrainConfig(max_epochs=max_epochs)

# backprop against central differences, on untrained weights
demos = generate_expert_demos(task.id, plan, cfg)
window = make_windows(demos[:1], 3, 2)[0]
print("gradient check, max relative error:", gradient_check(NeuralWeights.random(seed=0), window))

train = [d for d in demos if d.role == "train"]
val = [d for d in demos if d.role == "validation"]

t0 = time.time()
expert_w, log = neural_train(train, val, tc)
print(f"expert: {len(log.epochs)} epochs, best val mse {log.best_val:.2e}")
actions = {}
for a in ACTIONS:
    sweeps = generate_primitive_demos(a, plan, cfg)
    w, log = neural_train(sweeps, sweeps, tc)
    actions[a] = NeuralPredictor(a, w)
    print(f"{a.value}: {len(log.epochs)} epochs, best val mse {log.best_val:.2e}")
print(f"trained in {time.time() - t0:.0f} s")

expert = NeuralPredictor(task.id, expert_w)
predictors = PredictorSet(expert, actions)

# does the policy repeat the demonstrated moves?
hits = total = 0
for d in train:
    for i in range(len(d.states) - 1):
        e = expert.predict(d.frames[: i + 1])
        preds = {a: actions[a].predict([d.frames[i]]) for a in ACTIONS}
        a, _ = select_action(e, preds)
        hits += a is action_between(d.states[i], d.states[i + 1])
        total += 1
print(f"agreement on demonstrated states: {hits}/{total}")

for mode in PolicyMode:
    print(format_summary(sweep(task, predictors, mode, cfg)))
