"""
张量核心：带计算记录的稠密张量与反向模式自动微分。
"""

from .tensor import Tensor, Recording, GradientStore, backward, active_recording, make_op
from . import ops
from .grad_check import grad_check, grad_check_params, GradCheckReport

__all__ = [
    "Tensor",
    "Recording",
    "GradientStore",
    "backward",
    "active_recording",
    "make_op",
    "ops",
    "grad_check",
    "grad_check_params",
    "GradCheckReport",
]
