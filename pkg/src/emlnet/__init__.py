"""Universal domain adaptation with one-vs-all open-set heads and
confidence-weighted open-set entropy minimization."""

from .estimator import EMLNet
from .evaluation import EvalResult, h_score, predict, threshold_sweep
from .losses import LossReport, LossWeights, loss_all
from .memory import MemoryBank
from .model import ModelParams, forward, init_params
from .scenario import UNKNOWN, DomainDataset, Scenario, SplitSpec, generate_scenario
from .trainer import MemoryConfig, ModelConfig, OptimConfig, TrainHistory, train

__all__ = [
    "EMLNet",
    "EvalResult",
    "h_score",
    "predict",
    "threshold_sweep",
    "LossReport",
    "LossWeights",
    "loss_all",
    "MemoryBank",
    "ModelParams",
    "forward",
    "init_params",
    "UNKNOWN",
    "DomainDataset",
    "Scenario",
    "SplitSpec",
    "generate_scenario",
    "MemoryConfig",
    "ModelConfig",
    "OptimConfig",
    "TrainHistory",
    "train",
]
