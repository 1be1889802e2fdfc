"""
张量与计算记录

Tensor 只保存数值（64 位浮点，行优先）与 requires_grad 标记；
运算在活动的 Recording 上追加节点，backward() 沿节点逆序应用链式法则。

Recording 每次前向传播重建一次，且只属于创建它的线程。
"""

import threading
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from amr.errors import DimensionError

# 反向函数：输入输出梯度，返回每个输入的梯度（不需要梯度的输入返回 None）
BackwardFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]

_local = threading.local()


class Tensor:
    """
    参与计算记录的稠密张量。

    属性:
        data: numpy float64 数组，形状即张量形状
        requires_grad: 是否需要梯度；为 False 的张量永远不会累积梯度
        node: 在当前 Recording 中的节点编号（未被记录时为 None）
        name: 可选名称，便于调试与检查点序列化
    """

    __slots__ = ("data", "requires_grad", "node", "name")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.node: Optional[int] = None
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    def numpy(self) -> np.ndarray:
        """返回数值副本"""
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() 需要单元素张量，实际形状 {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"


@dataclass
class Node:
    """记录中的一个节点；叶子节点没有 backward"""
    kind: str
    inputs: Tuple[Optional[int], ...]
    tensor: Tensor
    backward: Optional[BackwardFn] = None


@dataclass
class Recording:
    """
    追加式计算记录。

    节点按创建顺序追加，因此每个节点的输入都排在它之前（拓扑序）。
    以 `with Recording() as rec:` 激活；嵌套时内层优先。
    """
    nodes: List[Node] = field(default_factory=list)
    _index: Dict[int, int] = field(default_factory=dict, repr=False)

    def __enter__(self) -> "Recording":
        stack = _stack()
        stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        stack = _stack()
        if stack and stack[-1] is self:
            stack.pop()

    def node_of(self, tensor: Tensor) -> Optional[int]:
        return self._index.get(id(tensor))

    def leaf(self, tensor: Tensor) -> int:
        """为需要梯度的外部张量（通常是参数）登记叶子节点"""
        nid = self._index.get(id(tensor))
        if nid is None:
            nid = self._append(Node("leaf", (), tensor))
        return nid

    def record(self, kind: str, inputs: Sequence[Tensor], out: Tensor, backward: BackwardFn) -> Tensor:
        input_ids = tuple(self.leaf(t) if t.requires_grad else None for t in inputs)
        self._append(Node(kind, input_ids, out, backward))
        return out

    def _append(self, node: Node) -> int:
        nid = len(self.nodes)
        self.nodes.append(node)
        self._index[id(node.tensor)] = nid
        node.tensor.node = nid
        return nid

    def backward(self, loss: Tensor) -> "GradientStore":
        """
        从标量 loss 反向传播。

        返回:
            GradientStore: 节点编号 -> 梯度
        """
        if loss.size != 1:
            raise DimensionError(f"backward() 需要标量损失，实际形状 {loss.shape}")
        start = self.node_of(loss)
        grads: Dict[int, np.ndarray] = {}
        if start is None:
            return GradientStore(self, grads)
        grads[start] = np.ones_like(loss.data)

        for nid in range(start, -1, -1):
            g = grads.get(nid)
            node = self.nodes[nid]
            if g is None or node.backward is None:
                continue
            for input_id, input_grad in zip(node.inputs, node.backward(g)):
                if input_id is None or input_grad is None:
                    continue
                if input_id in grads:
                    grads[input_id] = grads[input_id] + input_grad
                else:
                    grads[input_id] = input_grad
        return GradientStore(self, grads)


class GradientStore:
    """backward() 的结果：按张量查询梯度，未连通的张量梯度为零"""

    def __init__(self, recording: Recording, grads: Dict[int, np.ndarray]):
        self._recording = recording
        self._grads = grads

    def __getitem__(self, tensor: Tensor) -> np.ndarray:
        nid = self._recording.node_of(tensor)
        if nid is None or nid not in self._grads:
            return np.zeros_like(tensor.data)
        return self._grads[nid]

    def __contains__(self, tensor: Tensor) -> bool:
        nid = self._recording.node_of(tensor)
        return nid is not None and nid in self._grads

    def __len__(self) -> int:
        return len(self._grads)


def _stack() -> List[Recording]:
    if not hasattr(_local, "stack"):
        _local.stack = []
    return _local.stack


def active_recording() -> Optional[Recording]:
    """当前线程上激活的 Recording（没有则为 None）"""
    stack = _stack()
    return stack[-1] if stack else None


def backward(loss: Tensor) -> GradientStore:
    """对当前活动记录执行反向传播"""
    rec = active_recording()
    if rec is None:
        raise RuntimeError("backward() 需要在 Recording 上下文中调用")
    return rec.backward(loss)


def make_op(kind: str, value: np.ndarray, inputs: Sequence[Tensor], backward_fn: BackwardFn) -> Tensor:
    """
    构造一个运算结果；只有在存在活动记录且任一输入需要梯度时才记录节点。

    参数:
        kind: 运算名称
        value: 前向结果
        inputs: 输入张量
        backward_fn: 反向函数，按 inputs 顺序返回梯度
    """
    rec = active_recording()
    needs_grad = rec is not None and any(t.requires_grad for t in inputs)
    out = Tensor(value, requires_grad=needs_grad)
    if needs_grad:
        rec.record(kind, inputs, out, backward_fn)
    return out
