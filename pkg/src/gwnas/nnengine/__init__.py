"""From-scratch numpy CNN engine for candidate evaluation and final training."""

from .model import Adam, Network, NumericalError, backward, forward
from .serialize import ParamFormatError, dumps_params, load_params, loads_params, save_params
from .surrogate import SurrogateEvaluator, SurrogateSpec, surrogate_evaluate
from .train import (
    FINAL_IMAGE, FINAL_TIMESERIES, QUICK_IMAGE, QUICK_TIMESERIES,
    EvalResult, FinalResult, TrainConfig, TrainingEvaluator, final_train, quick_evaluate,
)

__all__ = [
    "Adam", "Network", "NumericalError", "backward", "forward",
    "ParamFormatError", "dumps_params", "load_params", "loads_params", "save_params",
    "SurrogateEvaluator", "SurrogateSpec", "surrogate_evaluate",
    "FINAL_IMAGE", "FINAL_TIMESERIES", "QUICK_IMAGE", "QUICK_TIMESERIES",
    "EvalResult", "FinalResult", "TrainConfig", "TrainingEvaluator",
    "final_train", "quick_evaluate",
]
