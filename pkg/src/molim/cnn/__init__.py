from .model import (CnnArchitecture, CnnModel, backward, forward, init_model,
                    loss, one_hot, predict, predict_batch)
from .training import AdamState, EpochStats, TrainConfig, adam_step, train

__all__ = [
    "CnnArchitecture", "CnnModel", "backward", "forward", "init_model",
    "loss", "one_hot", "predict", "predict_batch",
    "AdamState", "EpochStats", "TrainConfig", "adam_step", "train",
]
