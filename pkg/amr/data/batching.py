"""
批处理：按批填充并生成掩码
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .corpus import Example
from .vocab import PAD_INDEX, Vocabulary

# 无标注样本在 labels 中的占位值
NO_LABEL = -1


@dataclass
class Batch:
    """
    一个批次。

    属性:
        comment_ids / response_ids: [B × n_max] / [B × m_max] 词下标，末尾以 0 填充
        comment_mask / response_mask: 同形状布尔矩阵，非填充位置为 True（每行为 True 前缀）
        labels: [B]，无标注为 -1
        indices: 每行对应的原始样本下标
    """
    comment_ids: np.ndarray
    response_ids: np.ndarray
    comment_mask: np.ndarray
    response_mask: np.ndarray
    labels: np.ndarray
    indices: np.ndarray

    @property
    def size(self) -> int:
        return int(self.labels.shape[0])

    @property
    def comment_lengths(self) -> np.ndarray:
        return self.comment_mask.sum(axis=1)

    @property
    def response_lengths(self) -> np.ndarray:
        return self.response_mask.sum(axis=1)

    def __len__(self) -> int:
        return self.size


def _pad(rows: Sequence[List[int]]):
    width = max(len(r) for r in rows)
    ids = np.full((len(rows), width), PAD_INDEX, dtype=np.int64)
    mask = np.zeros((len(rows), width), dtype=bool)
    for k, r in enumerate(rows):
        ids[k, :len(r)] = r
        mask[k, :len(r)] = True
    return ids, mask


def collate(examples: Sequence[Example], vocab: Vocabulary,
            indices: Optional[Sequence[int]] = None) -> Batch:
    """把若干样本填充成一个批次，宽度取该批最大长度"""
    if not examples:
        raise ValueError("不能从空样本列表构造批次")
    comment_ids, comment_mask = _pad([vocab.encode(ex.comment_tokens) for ex in examples])
    response_ids, response_mask = _pad([vocab.encode(ex.response_tokens) for ex in examples])
    labels = np.array([NO_LABEL if ex.label is None else ex.label for ex in examples], dtype=np.int64)
    idx = np.arange(len(examples)) if indices is None else np.asarray(indices, dtype=np.int64)
    return Batch(comment_ids, response_ids, comment_mask, response_mask, labels, idx)


def make_batches(
    examples: Sequence[Example],
    vocab: Vocabulary,
    batch_size: int = 32,
    seed: Optional[int] = None,
) -> List[Batch]:
    """
    切分批次。

    参数:
        batch_size: 批大小，最后一批可以更小
        seed: 打乱种子；为 None 时保持原顺序（评估用）
    """
    if batch_size <= 0:
        raise ValueError(f"batch_size 必须为正数，实际 {batch_size}")
    order = np.arange(len(examples))
    if seed is not None:
        order = np.random.default_rng(seed).permutation(len(examples))
    batches = []
    for start in range(0, len(order), batch_size):
        chunk = order[start:start + batch_size]
        batches.append(collate([examples[i] for i in chunk], vocab, chunk))
    return batches
