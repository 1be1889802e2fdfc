"""
合成语料生成器

在没有 SARC 语料时用作桌面规模的替代：类别由回复中的标记词决定，
因此数据线性可分，任何正确实现的模型都应能记住它。
"""

from typing import List

import numpy as np

from .corpus import Example

N_MARKERS = 3


def synthetic_tokens(vocab_size: int) -> List[str]:
    return [f"w{k}" for k in range(vocab_size)]


def generate_separable(
    n: int = 32,
    vocab_size: int = 50,
    max_comment: int = 10,
    max_response: int = 10,
    seed: int = 0,
) -> List[Example]:
    """
    生成类别均衡、可分的样本。

    参数:
        n: 样本数
        vocab_size: 词数（含标记词），至少 2*N_MARKERS + 1
        max_comment / max_response: 最大长度
        seed: 随机种子

    返回:
        List[Example]：讽刺样本的回复含 w0..w2 之一，非讽刺样本含 w3..w5 之一
    """
    if vocab_size <= 2 * N_MARKERS:
        raise ValueError(f"vocab_size 至少为 {2 * N_MARKERS + 1}")
    if max_comment < 1 or max_response < 1:
        raise ValueError("最大长度必须为正数")
    rng = np.random.default_rng(seed)
    words = synthetic_tokens(vocab_size)
    filler = words[2 * N_MARKERS:]

    examples = []
    for k in range(n):
        label = k % 2
        n_len = int(rng.integers(1, max_comment + 1))
        m_len = int(rng.integers(1, max_response + 1))
        comment = [filler[int(j)] for j in rng.integers(0, len(filler), size=n_len)]
        response = [filler[int(j)] for j in rng.integers(0, len(filler), size=m_len)]
        marker = words[int(rng.integers(0, N_MARKERS)) + (0 if label == 1 else N_MARKERS)]
        response[int(rng.integers(0, m_len))] = marker
        examples.append(Example(comment, response, label))

    order = rng.permutation(n)
    return [examples[i] for i in order]
