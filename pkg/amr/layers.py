"""
神经网络基础层：LSTM 单元、带掩码的双向 LSTM、线性映射

门的打包顺序固定为 (i, f, g, o)，检查点格式中也记录了这一点。
"""

from dataclasses import dataclass
from typing import Iterator, List, Tuple

import numpy as np

from amr.engine import Tensor, ops
from amr.errors import DegenerateMaskError, DimensionError

GATE_ORDER = "i,f,g,o"
FORGET_BIAS = 1.0


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass
class LstmParams:
    """单向 LSTM 参数：w_ih [in × 4d]，w_hh [d × 4d]，bias [4d]"""
    w_ih: Tensor
    w_hh: Tensor
    bias: Tensor

    @property
    def in_dim(self) -> int:
        return self.w_ih.shape[0]

    @property
    def hidden(self) -> int:
        return self.w_hh.shape[0]

    @classmethod
    def init(cls, in_dim: int, hidden: int, rng: np.random.Generator) -> "LstmParams":
        bias = np.zeros(4 * hidden)
        bias[hidden:2 * hidden] = FORGET_BIAS
        return cls(
            Tensor(glorot_uniform(rng, in_dim, 4 * hidden), requires_grad=True),
            Tensor(glorot_uniform(rng, hidden, 4 * hidden), requires_grad=True),
            Tensor(bias, requires_grad=True),
        )

    def named_tensors(self, prefix: str) -> Iterator[Tuple[str, Tensor]]:
        yield f"{prefix}.w_ih", self.w_ih
        yield f"{prefix}.w_hh", self.w_hh
        yield f"{prefix}.bias", self.bias


@dataclass
class BiLstmParams:
    """双向 LSTM：两个方向的 (in_dim, d) 相同"""
    forward: LstmParams
    backward: LstmParams

    @property
    def in_dim(self) -> int:
        return self.forward.in_dim

    @property
    def hidden(self) -> int:
        return self.forward.hidden

    @classmethod
    def init(cls, in_dim: int, hidden: int, rng: np.random.Generator) -> "BiLstmParams":
        return cls(LstmParams.init(in_dim, hidden, rng), LstmParams.init(in_dim, hidden, rng))

    def named_tensors(self, prefix: str) -> Iterator[Tuple[str, Tensor]]:
        yield from self.forward.named_tensors(f"{prefix}.forward")
        yield from self.backward.named_tensors(f"{prefix}.backward")


@dataclass
class LinearParams:
    """仿射映射 xW + b：weight [in × out]，bias [out]"""
    weight: Tensor
    bias: Tensor

    @property
    def in_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[1]

    @classmethod
    def init(cls, in_dim: int, out_dim: int, rng: np.random.Generator) -> "LinearParams":
        return cls(
            Tensor(glorot_uniform(rng, in_dim, out_dim), requires_grad=True),
            Tensor(np.zeros(out_dim), requires_grad=True),
        )

    def named_tensors(self, prefix: str) -> Iterator[Tuple[str, Tensor]]:
        yield f"{prefix}.weight", self.weight
        yield f"{prefix}.bias", self.bias


def lstm_step(p: LstmParams, x_t: Tensor, h_prev: Tensor, c_prev: Tensor) -> Tuple[Tensor, Tensor]:
    """
    LSTM 单步：i,f,o 为 sigmoid 门，g 为 tanh 候选；
    c = f⊙c_prev + i⊙g，h = o⊙tanh(c)。

    返回:
        (h, c)，均为 [d]
    """
    d = p.hidden
    if x_t.shape != (p.in_dim,) or h_prev.shape != (d,) or c_prev.shape != (d,):
        raise DimensionError(
            f"lstm_step: 形状不一致 x={x_t.shape} h={h_prev.shape} c={c_prev.shape}, "
            f"期望 in={p.in_dim} d={d}"
        )
    gates_x = ops.reshape(ops.matmul(ops.reshape(x_t, (1, p.in_dim)), p.w_ih), (4 * d,))
    state = ops.lstm_cell(gates_x, ops.concat_last([h_prev, c_prev]), p.w_hh, p.bias)
    return ops.slice_last(state, 0, d), ops.slice_last(state, d, 2 * d)


def true_length(mask: np.ndarray) -> int:
    """校验掩码为 True 前缀并返回其长度"""
    mask = np.asarray(mask.data if isinstance(mask, Tensor) else mask, dtype=bool)
    length = int(mask.sum())
    if length == 0:
        raise DegenerateMaskError("序列被完全屏蔽")
    if not mask[:length].all():
        raise ValueError("掩码必须是 True 前缀（填充只能出现在末尾）")
    return length


def _run_direction(p: LstmParams, seq: Tensor, length: int, reverse: bool) -> Tensor:
    total = seq.shape[0]
    d = p.hidden
    gates = ops.matmul(seq, p.w_ih)
    state = Tensor(np.zeros(2 * d))
    steps = range(length - 1, -1, -1) if reverse else range(length)
    outputs: List[Tensor] = []
    for t in steps:
        state = ops.lstm_cell(ops.take_row(gates, t), state, p.w_hh, p.bias)
        outputs.append(ops.slice_last(state, 0, d))
    return ops.stack_rows(outputs, total, list(steps))


def bilstm_forward(p: BiLstmParams, seq: Tensor, mask) -> Tensor:
    """
    带掩码的双向 LSTM。

    正向只处理真实长度；反向从最后一个未屏蔽位置倒序读取。
    等价于把每条序列按真实长度单独处理。

    参数:
        seq: [T × d_in]
        mask: [T] 布尔 True 前缀

    返回:
        Tensor: [T × 2d]，屏蔽位置的行为零
    """
    if seq.data.ndim != 2 or seq.shape[1] != p.in_dim:
        raise DimensionError(f"bilstm_forward: 输入形状 {seq.shape} 与 in_dim={p.in_dim} 不符")
    if np.asarray(mask.data if isinstance(mask, Tensor) else mask).shape != (seq.shape[0],):
        raise DimensionError(f"bilstm_forward: 掩码长度与序列长度 {seq.shape[0]} 不符")
    length = true_length(mask)
    fwd = _run_direction(p.forward, seq, length, reverse=False)
    bwd = _run_direction(p.backward, seq, length, reverse=True)
    return ops.concat_last([fwd, bwd])


def linear(p: LinearParams, x: Tensor) -> Tensor:
    """xᵀW + b，x 为 [in]，结果为 [out]"""
    if x.shape != (p.in_dim,):
        raise DimensionError(f"linear: 输入形状 {x.shape} 与 in_dim={p.in_dim} 不符")
    y = ops.reshape(ops.matmul(ops.reshape(x, (1, p.in_dim)), p.weight), (p.out_dim,))
    return ops.add(y, p.bias)


def linear_rows(p: LinearParams, x: Tensor) -> Tensor:
    """逐行仿射映射，x 为 [T × in]，结果为 [T × out]"""
    if x.data.ndim != 2 or x.shape[1] != p.in_dim:
        raise DimensionError(f"linear_rows: 输入形状 {x.shape} 与 in_dim={p.in_dim} 不符")
    return ops.add(ops.matmul(x, p.weight), ops.expand_rows(p.bias, x.shape[0]))
