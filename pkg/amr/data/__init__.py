"""
数据模块：语料读取、分词、词表与词向量、截断、批处理和统计。
"""

from .corpus import (
    Example,
    CorpusStats,
    tokenize,
    load_corpus,
    read_corpus_lines,
    write_corpus,
    truncate,
    split_train_val,
    compute_stats,
)
from .vocab import (
    Vocabulary,
    EmbeddingMatrix,
    build_vocab,
    load_embeddings,
    random_embeddings,
    PAD_INDEX,
    UNK_INDEX,
)
from .batching import Batch, collate, make_batches
from .synthetic import generate_separable

__all__ = [
    "Example",
    "CorpusStats",
    "tokenize",
    "load_corpus",
    "read_corpus_lines",
    "write_corpus",
    "truncate",
    "split_train_val",
    "compute_stats",
    "Vocabulary",
    "EmbeddingMatrix",
    "build_vocab",
    "load_embeddings",
    "random_embeddings",
    "PAD_INDEX",
    "UNK_INDEX",
    "Batch",
    "collate",
    "make_batches",
    "generate_separable",
]
