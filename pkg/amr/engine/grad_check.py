"""
有限差分梯度检查

把记录得到的梯度与中心差分 (f(x+h) - f(x-h)) / 2h 逐坐标比较。
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Optional, Tuple

import numpy as np

from .tensor import Recording, Tensor

# 相对误差分母下限
REL_ERROR_FLOOR = 1e-6


@dataclass
class GradCheckReport:
    """
    梯度检查结果。

    属性:
        analytic: 记录得到的梯度
        numeric: 中心差分梯度
        rel_error: 逐坐标相对误差
        tol: 判定阈值
    """
    analytic: np.ndarray
    numeric: np.ndarray
    rel_error: np.ndarray
    tol: float

    @property
    def max_rel_error(self) -> float:
        return float(self.rel_error.max()) if self.rel_error.size else 0.0

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol


@dataclass
class ParamsGradCheckReport:
    """多个命名参数的梯度检查结果"""
    reports: Dict[str, GradCheckReport] = field(default_factory=dict)

    @property
    def max_rel_error(self) -> float:
        return max((r.max_rel_error for r in self.reports.values()), default=0.0)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports.values())

    def failures(self) -> Dict[str, float]:
        return {name: r.max_rel_error for name, r in self.reports.items() if not r.passed}


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), REL_ERROR_FLOOR)
    return np.abs(analytic - numeric) / denom


def grad_check(f: Callable[[Tensor], Tensor], at, h: float = 1e-5, tol: float = 1e-4) -> GradCheckReport:
    """
    对单个输入做梯度检查。

    参数:
        f: 输入 Tensor、输出标量 Tensor 的函数
        at: 检查点（数组或 Tensor）
        h: 差分步长
        tol: 相对误差阈值

    返回:
        GradCheckReport
    """
    x0 = np.array(at.data if isinstance(at, Tensor) else at, dtype=np.float64)

    with Recording() as rec:
        x = Tensor(x0, requires_grad=True)
        out = f(x)
        analytic = rec.backward(out)[x].copy()

    numeric = np.zeros_like(x0)
    flat = numeric.reshape(-1)
    for k in range(x0.size):
        plus = x0.copy()
        minus = x0.copy()
        plus.reshape(-1)[k] += h
        minus.reshape(-1)[k] -= h
        flat[k] = (f(Tensor(plus)).item() - f(Tensor(minus)).item()) / (2.0 * h)

    return GradCheckReport(analytic, numeric, relative_error(analytic, numeric), tol)


def grad_check_params(
    loss_fn: Callable[[], Tensor],
    params: Iterable[Tuple[str, Tensor]],
    h: float = 1e-5,
    tol: float = 1e-4,
    max_coords: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> ParamsGradCheckReport:
    """
    对一组命名参数做梯度检查（原地扰动参数数值，检查后恢复）。

    参数:
        loss_fn: 无参函数，读取当前参数并返回标量损失
        params: (名称, 参数) 序列
        max_coords: 每个张量最多检查的坐标数，缺省时检查全部坐标
        rng: 抽取坐标用的随机数生成器（给出 max_coords 时使用）

    未检查的坐标在 numeric 中为 NaN，rel_error 为 0。
    """
    params = [(name, t) for name, t in params if t.requires_grad]
    if max_coords is not None and max_coords <= 0:
        raise ValueError(f"max_coords 必须为正数，实际 {max_coords}")
    rng = rng if rng is not None else np.random.default_rng(0)
    with Recording() as rec:
        loss = loss_fn()
        grads = rec.backward(loss)
        analytic = {name: grads[t].copy() for name, t in params}

    result = ParamsGradCheckReport()
    for name, t in params:
        if max_coords is None or max_coords >= t.size:
            coords = np.arange(t.size)
        else:
            coords = np.sort(rng.choice(t.size, size=max_coords, replace=False))
        numeric = np.full(t.shape, np.nan)
        flat_data = t.data.reshape(-1)
        flat_num = numeric.reshape(-1)
        for k in coords:
            old = flat_data[k]
            flat_data[k] = old + h
            up = loss_fn().item()
            flat_data[k] = old - h
            down = loss_fn().item()
            flat_data[k] = old
            flat_num[k] = (up - down) / (2.0 * h)

        rel = np.zeros(t.shape)
        checked = ~np.isnan(numeric)
        rel[checked] = relative_error(analytic[name][checked], numeric[checked])
        result.reports[name] = GradCheckReport(analytic[name], numeric, rel, tol)
    return result
