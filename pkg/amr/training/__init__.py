"""
训练模块：损失、Adam、训练循环与检查点。
"""

from .optimizer import AdamState, adam_step
from .trainer import EpochRecord, TrainResult, accuracy, nll_loss, train_loop, write_history
from .checkpoint import FORMAT_VERSION, MAGIC, load_checkpoint, save_checkpoint

__all__ = [
    "AdamState",
    "adam_step",
    "EpochRecord",
    "TrainResult",
    "accuracy",
    "nll_loss",
    "train_loop",
    "write_history",
    "FORMAT_VERSION",
    "MAGIC",
    "load_checkpoint",
    "save_checkpoint",
]
