"""
注意力显著性

显著性 = |∂ p_pred / ∂ e_ij|：预测类别的输出概率对原始注意力能量的偏导绝对值，
用反向模式求得；展示时注意力矩阵与显著性矩阵各自除以自身最大值。
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from config import ModelConfig
from amr.data import Example, Vocabulary, collate, truncate
from amr.engine import Recording, ops
from amr.engine.grad_check import relative_error
from amr.errors import UnsupportedConfigError
from amr.model import AmrParams, ForwardTrace, forward, predict_labels

logger = logging.getLogger(__name__)

FD_STEP = 1e-4
FD_TOLERANCE = 1e-3
SALIENCY_FLOOR = 1e-6


@dataclass
class SaliencyMap:
    """
    单个样本的显著性图（矩阵不含填充位置）。

    属性:
        attention: 行归一化注意力，再除以最大值 [n × m]
        attention_over_comment: 列归一化注意力，再除以最大值 [n × m]
        saliency: 归一化显著性 [n × m]，最大值为 1（全零时保持为 0）
        raw_saliency: 未归一化的 |∂p/∂e|
    """
    comment_tokens: List[str]
    response_tokens: List[str]
    attention: np.ndarray
    attention_over_comment: np.ndarray
    saliency: np.ndarray
    raw_saliency: np.ndarray
    predicted_label: int
    predicted_probability: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "comment_tokens": list(self.comment_tokens),
            "response_tokens": list(self.response_tokens),
            "attention": self.attention.tolist(),
            "attention_over_comment": self.attention_over_comment.tolist(),
            "saliency": self.saliency.tolist(),
            "raw_saliency": self.raw_saliency.tolist(),
            "predicted_label": self.predicted_label,
            "predicted_probability": self.predicted_probability,
        }

    def save(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, ensure_ascii=False, indent=2)
            f.write("\n")
        return path


@dataclass
class SaliencyCheck:
    """有限差分校验结果"""
    max_rel_error: float
    checked: int
    tol: float = FD_TOLERANCE
    errors: Dict[Tuple[int, int], float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol


def normalize_by_max(matrix: np.ndarray) -> np.ndarray:
    peak = float(np.max(matrix)) if matrix.size else 0.0
    if peak <= 0.0:
        return np.zeros_like(matrix)
    return matrix / peak


def _require_attention(config: ModelConfig) -> None:
    if not config.has_conversation_path:
        raise UnsupportedConfigError("显著性分析需要对话路径（当前为 utterance_only 模型）")
    if not config.use_attention:
        raise UnsupportedConfigError("显著性分析需要注意力层（当前模型关闭了注意力）")


def _signed_gradient(
    params: AmrParams, config: ModelConfig, example: Example, vocab: Vocabulary
) -> Tuple[np.ndarray, int, float, ForwardTrace]:
    batch = collate([example], vocab)
    with Recording() as rec:
        probs, traces = forward(params, config, batch, training=False)
        label = int(predict_labels(probs.data)[0])
        target = ops.sum_all(ops.gather(probs, [0], [label]))
    grads = rec.backward(target)
    trace = traces[0]
    n, m = trace.comment_length, trace.response_length
    return grads[trace.energies][:n, :m].copy(), label, target.item(), trace


def saliency(params: AmrParams, config: ModelConfig, example: Example, vocab: Vocabulary) -> SaliencyMap:
    """
    计算单个样本的注意力显著性。

    异常:
        UnsupportedConfigError: 模型没有注意力层或没有对话路径
    """
    _require_attention(config)
    example = truncate(example, config.n_cap, config.m_cap)
    grad, label, prob, trace = _signed_gradient(params, config, example, vocab)
    raw = np.abs(grad)
    return SaliencyMap(
        comment_tokens=list(example.comment_tokens),
        response_tokens=list(example.response_tokens),
        attention=normalize_by_max(trace.attention_over_response),
        attention_over_comment=normalize_by_max(trace.attention_over_comment),
        saliency=normalize_by_max(raw),
        raw_saliency=raw,
        predicted_label=label,
        predicted_probability=prob,
    )


def verify_saliency(
    params: AmrParams,
    config: ModelConfig,
    example: Example,
    vocab: Vocabulary,
    h: float = FD_STEP,
    tol: float = FD_TOLERANCE,
    floor: float = SALIENCY_FLOOR,
) -> SaliencyCheck:
    """
    用中心差分逐元素校验 |∂p_pred/∂e_ij|（只检查显著性大于 floor 的位置）。
    """
    _require_attention(config)
    example = truncate(example, config.n_cap, config.m_cap)
    grad, label, _, trace = _signed_gradient(params, config, example, vocab)
    batch = collate([example], vocab)
    base = trace.energies.data.copy()

    def prob_at(energies: np.ndarray) -> float:
        probs, _ = forward(params, config, batch, training=False, energy_overrides={0: energies})
        return float(probs.data[0, label])

    check = SaliencyCheck(max_rel_error=0.0, checked=0, tol=tol)
    for (i, j), analytic in np.ndenumerate(grad):
        if abs(analytic) <= floor:
            continue
        plus, minus = base.copy(), base.copy()
        plus[i, j] += h
        minus[i, j] -= h
        numeric = (prob_at(plus) - prob_at(minus)) / (2 * h)
        err = float(relative_error(np.abs(np.array([analytic])), np.abs(np.array([numeric])))[0])
        check.errors[(i, j)] = err
        check.max_rel_error = max(check.max_rel_error, err)
        check.checked += 1

    logger.info(f"显著性有限差分校验: {check.checked} 个位置，最大相对误差 {check.max_rel_error:.2e}")
    return check
