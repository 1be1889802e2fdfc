"""
可微运算

所有运算都不做隐式广播：形状不一致直接抛出 DimensionError，
需要扩展时调用方显式使用 reshape / expand_rows。
"""

from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from amr.errors import DegenerateMaskError, DimensionError
from .tensor import Tensor, make_op

MaskLike = Union[np.ndarray, Tensor, Sequence[bool]]

# 掩码位置的能量哨兵值
MASK_SENTINEL = -1e30


def _mask_array(mask: MaskLike, shape: Tuple[int, ...]) -> np.ndarray:
    arr = mask.data if isinstance(mask, Tensor) else np.asarray(mask)
    arr = arr.astype(bool)
    if arr.shape != shape:
        raise DimensionError(f"掩码形状 {arr.shape} 与张量形状 {shape} 不一致")
    return arr


def _check_same(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: 形状不匹配 {a.shape} vs {b.shape}")


# ==================== 逐元素运算 ====================

def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same(a, b, "add")
    return make_op("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same(a, b, "sub")
    return make_op("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same(a, b, "mul")
    av, bv = a.data, b.data
    return make_op("mul", av * bv, (a, b), lambda g: (g * bv, g * av))


def scale(a: Tensor, factor: float) -> Tensor:
    """乘以 Python 常数"""
    return make_op("scale", a.data * factor, (a,), lambda g: (g * factor,))


def mul_scalar(a: Tensor, s: Tensor) -> Tensor:
    """乘以标量张量（α·o_c）"""
    if s.size != 1:
        raise DimensionError(f"mul_scalar: 需要标量，实际形状 {s.shape}")
    av, sv = a.data, s.data.reshape(())

    def backward(g):
        return g * sv, np.asarray(np.sum(g * av)).reshape(s.shape)

    return make_op("mul_scalar", av * sv, (a, s), backward)


def sigmoid(a: Tensor) -> Tensor:
    y = _sigmoid(a.data)
    return make_op("sigmoid", y, (a,), lambda g: (g * y * (1.0 - y),))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return make_op("tanh", y, (a,), lambda g: (g * (1.0 - y * y),))


def relu(a: Tensor) -> Tensor:
    # x == 0 处梯度取 0
    active = a.data > 0
    return make_op("relu", np.where(active, a.data, 0.0), (a,), lambda g: (g * active,))


def log(a: Tensor, floor: float = 0.0) -> Tensor:
    """log(max(a, floor))；被截断的位置梯度为 0"""
    clipped = np.maximum(a.data, floor)
    passthrough = a.data > floor if floor > 0 else np.ones_like(a.data, dtype=bool)
    return make_op("log", np.log(clipped), (a,), lambda g: (np.where(passthrough, g / clipped, 0.0),))


# ==================== 形状运算 ====================

def reshape(a: Tensor, shape: Tuple[int, ...]) -> Tensor:
    shape = tuple(shape)
    if int(np.prod(shape)) != a.size:
        raise DimensionError(f"reshape: 无法把 {a.shape} 变为 {shape}")
    src = a.shape
    return make_op("reshape", a.data.reshape(shape), (a,), lambda g: (g.reshape(src),))


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise DimensionError(f"transpose: 需要二维张量，实际形状 {a.shape}")
    return make_op("transpose", a.data.T.copy(), (a,), lambda g: (g.T,))


def concat_last(parts: Sequence[Tensor]) -> Tensor:
    """沿最后一维拼接"""
    parts = list(parts)
    if not parts:
        raise DimensionError("concat_last: 输入列表为空")
    lead = parts[0].shape[:-1]
    for p in parts[1:]:
        if p.shape[:-1] != lead or p.data.ndim != parts[0].data.ndim:
            raise DimensionError(f"concat_last: 前导维度不一致 {parts[0].shape} vs {p.shape}")
    if len(parts) == 1:
        return parts[0]
    widths = [p.shape[-1] for p in parts]
    offsets = np.cumsum([0] + widths)

    def backward(g):
        return tuple(g[..., offsets[k]:offsets[k + 1]] for k in range(len(parts)))

    return make_op("concat", np.concatenate([p.data for p in parts], axis=-1), parts, backward)


def slice_last(a: Tensor, start: int, stop: int) -> Tensor:
    """取最后一维的 [start, stop)"""
    width = a.shape[-1]
    if not 0 <= start < stop <= width:
        raise DimensionError(f"slice_last: 区间 [{start}, {stop}) 超出宽度 {width}")

    def backward(g):
        full = np.zeros_like(a.data)
        full[..., start:stop] = g
        return (full,)

    return make_op("slice_last", a.data[..., start:stop].copy(), (a,), backward)


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    """取二维张量的行 [start, stop)"""
    if a.data.ndim != 2 or not 0 <= start < stop <= a.shape[0]:
        raise DimensionError(f"slice_rows: 区间 [{start}, {stop}) 不适用于形状 {a.shape}")

    def backward(g):
        full = np.zeros_like(a.data)
        full[start:stop] = g
        return (full,)

    return make_op("slice_rows", a.data[start:stop].copy(), (a,), backward)


def take_row(a: Tensor, index: int) -> Tensor:
    """二维张量的第 index 行，结果为一维"""
    if a.data.ndim != 2 or not 0 <= index < a.shape[0]:
        raise DimensionError(f"take_row: 行号 {index} 不适用于形状 {a.shape}")

    def backward(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    return make_op("take_row", a.data[index].copy(), (a,), backward)


def stack_rows(rows: Sequence[Tensor], total: Optional[int] = None,
               positions: Optional[Sequence[int]] = None) -> Tensor:
    """
    把一维张量堆叠成 [total × d]，未指定的行为零。

    参数:
        rows: 同宽度的一维张量
        total: 结果行数，默认等于 len(rows)
        positions: 每个输入所在的行号，默认 0..len(rows)-1
    """
    rows = list(rows)
    if not rows:
        raise DimensionError("stack_rows: 输入列表为空")
    width = rows[0].shape
    if len(width) != 1 or any(r.shape != width for r in rows):
        raise DimensionError(f"stack_rows: 行形状不一致 {[r.shape for r in rows]}")
    total = len(rows) if total is None else total
    positions = list(range(len(rows))) if positions is None else list(positions)
    if len(positions) != len(rows) or any(not 0 <= p < total for p in positions):
        raise DimensionError(f"stack_rows: 行位置 {positions} 与总行数 {total} 不符")
    out = np.zeros((total, width[0]))
    for p, r in zip(positions, rows):
        out[p] = r.data

    def backward(g):
        return tuple(g[p] for p in positions)

    return make_op("stack_rows", out, rows, backward)


def expand_rows(a: Tensor, count: int) -> Tensor:
    """把一维 [k] 显式扩展为 [count × k]"""
    if a.data.ndim != 1:
        raise DimensionError(f"expand_rows: 需要一维张量，实际形状 {a.shape}")
    return make_op("expand_rows", np.tile(a.data, (count, 1)), (a,), lambda g: (g.sum(axis=0),))


# ==================== 归约与矩阵运算 ====================

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: 形状不匹配 {a.shape} @ {b.shape}")
    av, bv = a.data, b.data
    return make_op("matmul", av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def sum_all(a: Tensor) -> Tensor:
    return make_op("sum", np.asarray(a.data.sum()), (a,), lambda g: (np.full_like(a.data, float(g)),))


def mean(a: Tensor) -> Tensor:
    n = a.size
    return make_op("mean", np.asarray(a.data.mean()), (a,), lambda g: (np.full_like(a.data, float(g) / n),))


def gather(a: Tensor, rows: Sequence[int], cols: Sequence[int]) -> Tensor:
    """取出 a[rows[k], cols[k]]，结果为一维"""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, (rows, cols), g)
        return (full,)

    return make_op("gather", a.data[rows, cols].copy(), (a,), backward)


def embedding(table: Tensor, ids: Sequence[int], padding_idx: Optional[int] = 0) -> Tensor:
    """
    词向量查表，结果为 [len(ids) × r]。

    padding_idx 对应的行永远得到零梯度。
    """
    ids = np.asarray(ids, dtype=np.int64).reshape(-1)
    if table.data.ndim != 2:
        raise DimensionError(f"embedding: 词表矩阵必须是二维，实际形状 {table.shape}")

    def backward(g):
        if not table.requires_grad:
            return (None,)
        full = np.zeros_like(table.data)
        np.add.at(full, ids, g)
        if padding_idx is not None:
            full[padding_idx] = 0.0
        return (full,)

    return make_op("embedding", table.data[ids], (table,), backward)


# ==================== 掩码归一化与池化 ====================

def softmax_masked(a: Tensor, mask: MaskLike, allow_empty_rows: bool = False) -> Tensor:
    """
    逐行 softmax，只在未屏蔽位置归一化；屏蔽位置输出恰好为 0。

    参数:
        a: [rows × cols]
        mask: 同形状布尔掩码，True 表示参与归一化
        allow_empty_rows: 为 True 时全屏蔽行输出全零，否则抛出 DegenerateMaskError
    """
    if a.data.ndim != 2:
        raise DimensionError(f"softmax_masked: 需要二维张量，实际形状 {a.shape}")
    m = _mask_array(mask, a.shape)
    empty = ~m.any(axis=1)
    if empty.any() and not allow_empty_rows:
        raise DegenerateMaskError(f"softmax_masked: 第 {int(np.argmax(empty))} 行被完全屏蔽")

    x = np.where(m, a.data, MASK_SENTINEL)
    x = x - x.max(axis=1, keepdims=True)
    e = np.where(m, np.exp(x), 0.0)
    denom = e.sum(axis=1, keepdims=True)
    y = np.divide(e, denom, out=np.zeros_like(e), where=denom > 0)

    def backward(g):
        return (y * (g - (g * y).sum(axis=1, keepdims=True)),)

    return make_op("softmax_masked", y, (a,), backward)


def max_over_time(a: Tensor, mask: MaskLike) -> Tensor:
    """
    [T × d] 在未屏蔽时间步上逐维取最大值，结果为 [d]。

    反向时每一维的梯度只流向取得最大值的那一步（并列取最早一步）。
    """
    if a.data.ndim != 2:
        raise DimensionError(f"max_over_time: 需要二维张量，实际形状 {a.shape}")
    m = _mask_array(mask, (a.shape[0],))
    if not m.any():
        raise DegenerateMaskError("max_over_time: 序列被完全屏蔽")
    masked = np.where(m[:, None], a.data, -np.inf)
    arg = np.argmax(masked, axis=0)
    cols = np.arange(a.shape[1])

    def backward(g):
        full = np.zeros_like(a.data)
        full[arg, cols] = g
        return (full,)

    return make_op("max_over_time", a.data[arg, cols].copy(), (a,), backward)


def dropout(a: Tensor, rate: float, training: bool, rng: Optional[np.random.Generator]) -> Tensor:
    """反向缩放 dropout：训练时以 rate 概率置零，幸存者乘 1/(1-rate)"""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate 必须在 [0, 1) 内，实际 {rate}")
    if not training or rate == 0.0:
        return a
    if rng is None:
        raise ValueError("训练模式下的 dropout 需要随机数生成器")
    keep = (rng.random(a.shape) >= rate) / (1.0 - rate)
    return make_op("dropout", a.data * keep, (a,), lambda g: (g * keep,))


# ==================== LSTM 单元 ====================

def lstm_cell(gates_x: Tensor, state: Tensor, w_hh: Tensor, bias: Tensor) -> Tensor:
    """
    单步 LSTM，门顺序 (i, f, g, o)。

    参数:
        gates_x: 输入贡献 x_t·W_ih，形状 [4d]
        state: 上一步状态 [h_prev ∥ c_prev]，形状 [2d]
        w_hh: 隐状态到门的权重 [d × 4d]
        bias: 门偏置 [4d]

    返回:
        Tensor: 新状态 [h ∥ c]，形状 [2d]
    """
    d = w_hh.shape[0]
    if (w_hh.shape != (d, 4 * d) or gates_x.shape != (4 * d,)
            or bias.shape != (4 * d,) or state.shape != (2 * d,)):
        raise DimensionError(
            f"lstm_cell: 形状不一致 gates_x={gates_x.shape} state={state.shape} "
            f"w_hh={w_hh.shape} bias={bias.shape}"
        )
    h_prev, c_prev = state.data[:d], state.data[d:]
    z = gates_x.data + h_prev @ w_hh.data + bias.data
    i = _sigmoid(z[:d])
    f = _sigmoid(z[d:2 * d])
    g_ = np.tanh(z[2 * d:3 * d])
    o = _sigmoid(z[3 * d:])
    c = f * c_prev + i * g_
    tc = np.tanh(c)
    h = o * tc

    def backward(grad):
        gh, gc = grad[:d], grad[d:]
        dc = gc + gh * o * (1.0 - tc * tc)
        dz = np.concatenate([
            dc * g_ * i * (1.0 - i),
            dc * c_prev * f * (1.0 - f),
            dc * i * (1.0 - g_ * g_),
            gh * tc * o * (1.0 - o),
        ])
        d_state = np.concatenate([w_hh.data @ dz, dc * f])
        return dz, d_state, np.outer(h_prev, dz), dz

    return make_op("lstm_cell", np.concatenate([h, c]), (gates_x, state, w_hh, bias), backward)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # 分段计算避免 exp 溢出
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def as_tensor(values, requires_grad: bool = False) -> Tensor:
    return values if isinstance(values, Tensor) else Tensor(values, requires_grad=requires_grad)


__all__: List[str] = [
    "add", "sub", "mul", "scale", "mul_scalar", "sigmoid", "tanh", "relu", "log",
    "reshape", "transpose", "concat_last", "slice_last", "slice_rows", "take_row",
    "stack_rows", "expand_rows", "matmul", "sum_all", "mean", "gather", "embedding",
    "softmax_masked", "max_over_time", "dropout", "lstm_cell", "as_tensor", "MASK_SENTINEL",
]
