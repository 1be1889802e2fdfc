"""
词表与预训练词向量
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
from tqdm import tqdm

from amr.engine import Tensor
from amr.errors import EmbeddingFormatError
from .corpus import Example

logger = logging.getLogger(__name__)

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
PAD_INDEX = 0
UNK_INDEX = 1

# 未出现在词向量文件中的词按此范围均匀初始化
OOV_INIT_RANGE = 0.05


class Vocabulary:
    """
    词到下标的映射。

    下标 0 固定为填充，1 固定为未知词；其余按首次出现顺序连续分配。
    """

    def __init__(self, tokens: Optional[Iterable[str]] = None):
        self._tokens: List[str] = [PAD_TOKEN, UNK_TOKEN]
        self._index: Dict[str, int] = {PAD_TOKEN: PAD_INDEX, UNK_TOKEN: UNK_INDEX}
        for tok in tokens or ():
            self.add(tok)

    def add(self, token: str) -> int:
        idx = self._index.get(token)
        if idx is None:
            idx = len(self._tokens)
            self._index[token] = idx
            self._tokens.append(token)
        return idx

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def __getitem__(self, token: str) -> int:
        return self._index.get(token, UNK_INDEX)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self._tokens == other._tokens

    @property
    def tokens(self) -> List[str]:
        return list(self._tokens)

    def as_dict(self) -> Dict[str, int]:
        return dict(self._index)

    def encode(self, tokens: Sequence[str]) -> List[int]:
        """把词序列映射为下标，未知词映射为 1"""
        return [self._index.get(tok, UNK_INDEX) for tok in tokens]

    @classmethod
    def from_tokens(cls, tokens: Sequence[str]) -> "Vocabulary":
        """由完整词表（含两个保留词）重建，用于读取检查点"""
        if list(tokens[:2]) != [PAD_TOKEN, UNK_TOKEN]:
            raise ValueError("词表前两项必须是填充词与未知词")
        return cls(tokens[2:])


def build_vocab(examples: Sequence[Example]) -> Vocabulary:
    """按首次出现顺序为训练数据中的每个词分配下标（先评论后回复）"""
    if not examples:
        raise ValueError("无法从空语料构建词表")
    vocab = Vocabulary()
    for ex in examples:
        for tok in ex.comment_tokens:
            vocab.add(tok)
        for tok in ex.response_tokens:
            vocab.add(tok)
    logger.info(f"词表大小: {len(vocab)}")
    return vocab


@dataclass
class EmbeddingMatrix:
    """
    词向量矩阵。

    属性:
        values: [vocab_size × r] 张量，第 0 行（填充）恒为零
        trainable: 训练时是否更新
        found: 从词向量文件中命中的词数
    """
    values: Tensor
    trainable: bool = True
    found: int = 0

    @property
    def dim(self) -> int:
        return self.values.shape[1]


def random_embeddings(vocab_size: int, dim: int, seed: int, trainable: bool = True) -> EmbeddingMatrix:
    """全部按 [-0.05, 0.05] 均匀初始化（填充行置零）"""
    rng = np.random.default_rng(seed)
    values = rng.uniform(-OOV_INIT_RANGE, OOV_INIT_RANGE, size=(vocab_size, dim))
    values[PAD_INDEX] = 0.0
    return EmbeddingMatrix(Tensor(values, requires_grad=trainable), trainable)


def load_embeddings(
    path: Path,
    vocab: Vocabulary,
    dim: int = 300,
    seed: int = 0,
    trainable: bool = True,
    show_progress: bool = False,
) -> EmbeddingMatrix:
    """
    读取 GloVe 文本格式词向量（每行 `token v1 … v_dim`）。

    参数:
        path: 词向量文件
        vocab: 目标词表；只复制词表中出现的词
        dim: 向量维度 r
        seed: 未命中词的随机初始化种子

    异常:
        EmbeddingFormatError: 向量宽度不等于 dim，消息中包含行号
    """
    matrix = random_embeddings(len(vocab), dim, seed, trainable)
    values = matrix.values.data
    found = 0
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(tqdm(f, desc="读取词向量", unit="行", disable=not show_progress), 1):
            parts = line.rstrip("\n").rstrip(" ").split(" ")
            if len(parts) <= 1 and not parts[0]:
                continue
            if len(parts) - 1 != dim:
                raise EmbeddingFormatError(f"向量宽度为 {len(parts) - 1}，期望 {dim}", line_no)
            token = parts[0]
            if token not in vocab:
                continue
            idx = vocab[token]
            if idx == PAD_INDEX:
                continue
            try:
                values[idx] = np.asarray(parts[1:], dtype=np.float64)
            except ValueError as e:
                raise EmbeddingFormatError(f"无法解析数值: {e}", line_no) from e
            found += 1
    values[PAD_INDEX] = 0.0
    matrix.found = found
    logger.info(f"词向量命中 {found}/{len(vocab) - 2} 个词")
    return matrix
