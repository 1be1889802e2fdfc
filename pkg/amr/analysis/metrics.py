"""
评估指标：混淆矩阵与 precision / recall / F1 / accuracy（正类为讽刺，标签 1）
"""

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, Sequence

import numpy as np

from config import ModelConfig
from amr.data import Example, Vocabulary
from amr.model import AmrParams, infer, predict_labels


@dataclass
class MetricsReport:
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    f1: float
    accuracy: float

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def save(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
        return path


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def metrics_from_predictions(predictions: Sequence[int], labels: Sequence[int]) -> MetricsReport:
    """
    由预测与真实标签计算指标；分母为 0 时对应比率记为 0。
    """
    pred = np.asarray(predictions, dtype=np.int64)
    gold = np.asarray(labels, dtype=np.int64)
    if pred.shape != gold.shape:
        raise ValueError(f"预测数量 {pred.shape} 与标签数量 {gold.shape} 不一致")
    if pred.size == 0:
        raise ValueError("没有可评估的样本")

    tp = int(np.sum((pred == 1) & (gold == 1)))
    fp = int(np.sum((pred == 1) & (gold == 0)))
    fn = int(np.sum((pred == 0) & (gold == 1)))
    tn = int(np.sum((pred == 0) & (gold == 0)))
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return MetricsReport(tp, fp, fn, tn, precision, recall, f1, _ratio(tp + tn, pred.size))


def evaluate(
    params: AmrParams,
    config: ModelConfig,
    data: Sequence[Example],
    vocab: Vocabulary,
    batch_size: int = 32,
) -> MetricsReport:
    """推理模式前向 + argmax 预测，汇总为 MetricsReport"""
    if not data:
        raise ValueError("评估集为空")
    if any(ex.label is None for ex in data):
        raise ValueError("评估集中存在没有标注的样本")
    probs, _ = infer(params, config, data, vocab, batch_size)
    return metrics_from_predictions(predict_labels(probs), [ex.label for ex in data])
