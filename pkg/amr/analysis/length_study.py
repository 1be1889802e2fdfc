"""
长度分析：按评论 / 回复长度分桶统计各系统的准确率

桶的成员关系按截断后的词数计算，区间为 (lo, hi]。
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from amr.data import Example, truncate

COMMENT_BUCKETS: Tuple[Tuple[int, int], ...] = ((0, 50), (50, 200))
RESPONSE_BUCKETS: Tuple[Tuple[int, int], ...] = ((0, 10), (10, 50), (50, 100))
CSV_COLUMNS = ("axis", "bucket_lo", "bucket_hi", "system", "count", "accuracy")


@dataclass
class BucketRow:
    axis: str
    bucket_lo: int
    bucket_hi: int
    system: str
    count: int
    accuracy: Optional[float]


@dataclass
class LengthStudy:
    """
    属性:
        comment_buckets / response_buckets: 桶边界
        systems: 系统名（保持输入顺序）
        rows: 每个 (轴, 桶, 系统) 一行；空桶的 accuracy 为 None
    """
    comment_buckets: Tuple[Tuple[int, int], ...]
    response_buckets: Tuple[Tuple[int, int], ...]
    systems: List[str]
    rows: List[BucketRow] = field(default_factory=list)

    def select(self, axis: str, system: str) -> List[BucketRow]:
        return [r for r in self.rows if r.axis == axis and r.system == system]

    def weighted_accuracy(self, axis: str, system: str) -> float:
        """按桶样本数加权合并准确率（等于该系统的总体准确率）"""
        rows = [r for r in self.select(axis, system) if r.count]
        total = sum(r.count for r in rows)
        return sum(r.count * r.accuracy for r in rows) / total if total else 0.0

    def to_csv(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for r in self.rows:
                acc = "" if r.accuracy is None else repr(r.accuracy)
                writer.writerow([r.axis, r.bucket_lo, r.bucket_hi, r.system, r.count, acc])
        return path


def bucket_index(length: int, buckets: Sequence[Tuple[int, int]]) -> int:
    """返回 length 所在 (lo, hi] 桶的下标；超出最后一个上界的归入最后一个桶"""
    for k, (lo, hi) in enumerate(buckets):
        if lo < length <= hi:
            return k
    if length > buckets[-1][1]:
        return len(buckets) - 1
    raise ValueError(f"长度 {length} 不落在任何桶中")


def length_study(
    predictions: Mapping[str, Sequence[int]],
    data: Sequence[Example],
    n_cap: int = 200,
    m_cap: int = 100,
    comment_buckets: Sequence[Tuple[int, int]] = COMMENT_BUCKETS,
    response_buckets: Sequence[Tuple[int, int]] = RESPONSE_BUCKETS,
) -> LengthStudy:
    """
    参数:
        predictions: 系统名 -> 与 data 对齐的预测标签（通常为 AMR / 话语路径 / 对话路径）
        data: 带标注的样本
        n_cap / m_cap: 截断长度

    异常:
        ValueError: 各系统覆盖的样本数与 data 不一致
    """
    if not data:
        raise ValueError("长度分析的数据为空")
    for name, pred in predictions.items():
        if len(pred) != len(data):
            raise ValueError(f"系统 {name} 的预测数 {len(pred)} 与样本数 {len(data)} 不一致")

    truncated = [truncate(ex, n_cap, m_cap) for ex in data]
    gold = np.array([ex.label for ex in truncated], dtype=np.int64)
    axes = {
        "comment": (tuple(comment_buckets),
                    np.array([bucket_index(ex.comment_length, comment_buckets) for ex in truncated])),
        "response": (tuple(response_buckets),
                     np.array([bucket_index(ex.response_length, response_buckets) for ex in truncated])),
    }

    study = LengthStudy(tuple(comment_buckets), tuple(response_buckets), list(predictions))
    for axis, (buckets, membership) in axes.items():
        for k, (lo, hi) in enumerate(buckets):
            in_bucket = membership == k
            count = int(in_bucket.sum())
            for name, pred in predictions.items():
                correct = np.asarray(pred, dtype=np.int64)[in_bucket] == gold[in_bucket]
                acc = float(correct.mean()) if count else None
                study.rows.append(BucketRow(axis, lo, hi, name, count, acc))
    return study
