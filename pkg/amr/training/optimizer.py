"""
Adam 优化器（带偏差修正）
"""

from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Tuple, Union

import numpy as np

from amr.data.vocab import PAD_INDEX
from amr.engine import GradientStore, Tensor
from amr.errors import DimensionError

EMBEDDING_NAME = "embeddings"

Grads = Union[GradientStore, Mapping[str, np.ndarray]]


@dataclass
class AdamState:
    """
    每个参数的一阶、二阶矩累积量与步数。

    属性:
        m / v: 参数名 -> 与参数同形状的累积量
        t: 已执行的更新步数
    """
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def _grad_for(grads: Grads, name: str, tensor: Tensor) -> np.ndarray:
    if isinstance(grads, GradientStore):
        return grads[tensor]
    return np.asarray(grads.get(name, np.zeros_like(tensor.data)), dtype=np.float64)


def adam_step(
    params: Iterable[Tuple[str, Tensor]],
    grads: Grads,
    state: AdamState,
    lr: float,
) -> AdamState:
    """
    对命名参数执行一步 Adam 更新（原地修改参数数据）。

    θ ← θ − lr · m̂ / (√v̂ + ε)，其中 m̂ = m / (1 − β₁ᵗ)，v̂ = v / (1 − β₂ᵗ)。
    冻结的张量（requires_grad=False）与词向量的填充行不被更新。

    参数:
        params: (名称, 张量) 序列，通常为 AmrParams.named_tensors()
        grads: GradientStore，或 名称 -> 梯度 的映射
        state: 优化器状态（原地更新）
        lr: 学习率

    返回:
        AdamState: 同一个 state 对象

    异常:
        DimensionError: 梯度形状与参数不一致
    """
    state.t += 1
    bias1 = 1.0 - state.beta1 ** state.t
    bias2 = 1.0 - state.beta2 ** state.t

    for name, tensor in params:
        if not tensor.requires_grad:
            continue
        g = _grad_for(grads, name, tensor)
        if g.shape != tensor.shape:
            raise DimensionError(f"adam_step: 参数 {name} 形状 {tensor.shape} 与梯度形状 {g.shape} 不一致")

        m = state.m.setdefault(name, np.zeros_like(tensor.data))
        v = state.v.setdefault(name, np.zeros_like(tensor.data))
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g

        update = lr * (m / bias1) / (np.sqrt(v / bias2) + state.eps)
        if name == EMBEDDING_NAME:
            update[PAD_INDEX] = 0.0
        tensor.data -= update

    return state
