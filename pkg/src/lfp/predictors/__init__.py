from .analytic import (
    AnalyticActionPredictor,
    AnalyticExpertPredictor,
    MotionField,
    analytic_action_predict,
    analytic_expert_predict,
    build_motion_field,
)
from .base import Kind, ObjectNotFound, Predictor, PredictorSet, localize_object
from .neural import (
    NeuralPredictor,
    NeuralWeights,
    TrainConfig,
    TrainingDiverged,
    gradient_check,
    load_weights,
    neural_predict,
    neural_train,
    save_weights,
)
from .oracle import OracleActionPredictor, OracleExpertPredictor, StateLookup

__all__ = [
    "AnalyticActionPredictor", "AnalyticExpertPredictor", "Kind", "MotionField",
    "NeuralPredictor", "NeuralWeights", "ObjectNotFound", "OracleActionPredictor",
    "OracleExpertPredictor", "Predictor", "PredictorSet", "StateLookup", "TrainConfig",
    "TrainingDiverged", "analytic_action_predict", "analytic_expert_predict",
    "build_motion_field", "gradient_check", "load_weights", "localize_object",
    "neural_predict", "neural_train", "save_weights",
]
