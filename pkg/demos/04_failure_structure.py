"""
Where learned predictors go wrong
=================================

With perfect (oracle) predictors the policy never deviates. Two kinds of
controlled prediction error reproduce the failure shapes seen with learned
predictors: a late turn at the corner column, and a wrong first push.
"""

from lfp.grid import ACTIONS, GridPos, TaskId, get_task, start_states
from lfp.harness import (
    classify_failures, delay_at_column_rule, first_state_analysis, format_summary,
    inject_fault, sweep, wrong_first_move_rule,
)
from lfp.policy import PolicyMode
from lfp.predictors import OracleActionPredictor, OracleExpertPredictor, PredictorSet, StateLookup
from lfp.render import RenderConfig

cfg = RenderConfig()
lookup = StateLookup(cfg)


def oracle(task):
    return PredictorSet(OracleExpertPredictor(task, cfg, lookup),
                        {a: OracleActionPredictor(a, cfg, lookup) for a in ACTIONS})


# MoveToPos: one bad expert prediction on reaching the last column
mp = get_task(TaskId.MOVE_TO_POS)
report = sweep(mp, inject_fault(oracle(mp), delay_at_column_rule(cfg)), PolicyMode.SEQUENCE_FED, cfg)
print(format_summary(report))

# PushPull: the expert predictor insists on Right from some lower-half starts
pp = get_task(TaskId.PUSH_PULL)
lower = [s for s in start_states(pp) if s.y < 4][::2]
report = sweep(pp, inject_fault(oracle(pp), wrong_first_move_rule(lower, cfg)), PolicyMode.SINGLE_IMAGE, cfg)
print(len(lower), "faulty starts")
print({t.value: n for t, n in classify_failures(report).items()})
print(first_state_analysis(report))
