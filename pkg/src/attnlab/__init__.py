"""Single-head attention with closed-form gradients, SGD and EM-like training."""

from attnlab.forward import AttentionParams, ForwardTrace, TaskInstance, forward
from attnlab.gradients import GradientSet, backward
from attnlab.trainers import RunLog, TrainConfig, em_step, sgd_step, train

__all__ = [
    "AttentionParams",
    "ForwardTrace",
    "GradientSet",
    "RunLog",
    "TaskInstance",
    "TrainConfig",
    "backward",
    "em_step",
    "forward",
    "sgd_step",
    "train",
]
