import json
from pathlib import Path

import numpy as np
import pytest

from config import ModelConfig, TrainConfig
from amr.data import Example, Vocabulary, build_vocab, collate, generate_separable, write_corpus
from amr.engine import ops
from amr.model import forward, init_model


def toy_vocab() -> Vocabulary:
    # 7 个词：<pad>, <unk> 加 5 个普通词
    return Vocabulary(["a", "b", "c", "d", "e"])


def toy_config(**flags) -> ModelConfig:
    return ModelConfig(**{"r": 4, "d": 4, **flags})


@pytest.fixture
def vocab() -> Vocabulary:
    return toy_vocab()


@pytest.fixture
def config() -> ModelConfig:
    return toy_config()


@pytest.fixture
def toy_batch(vocab):
    """两条样本：评论 3/2 个词，回复 2/1 个词（n=3, m=2）"""
    examples = [
        Example(("a", "b", "c"), ("d", "e"), 1),
        Example(("c", "a"), ("b",), 0),
    ]
    return collate(examples, vocab)


@pytest.fixture
def params(config, vocab):
    return init_model(config, vocab, seed=3)


@pytest.fixture
def fixture_examples():
    """4 条手写样本，每类 2 条"""
    return [
        Example(("yeah", "right"), ("sure", "thing", "buddy"), 1),
        Example(("great", "weather", "today"), ("i", "agree"), 0),
        Example(("oh", "wonderful"), ("love", "mondays"), 1),
        Example(("the", "bus", "is", "late"), ("again",), 0),
    ]


@pytest.fixture
def synthetic():
    return generate_separable(n=32, vocab_size=50, max_comment=10, max_response=10, seed=0)


@pytest.fixture
def fast_train_config() -> TrainConfig:
    return TrainConfig(learning_rate=1e-3, batch_size=8, max_epochs=3, patience=5,
                       seed=1, show_progress=False)


@pytest.fixture
def corpus_dir(tmp_path: Path, synthetic):
    """写好 train / val / test 三个合成语料文件"""
    write_corpus(synthetic[:24], tmp_path / "train.jsonl")
    write_corpus(synthetic[24:28], tmp_path / "val.jsonl")
    write_corpus(synthetic[28:], tmp_path / "test.jsonl")
    return tmp_path


@pytest.fixture
def run_config(tmp_path: Path) -> Path:
    """小维度的运行配置文件，路径由命令行参数给出"""
    path = tmp_path / "run_config.json"
    path.write_text(json.dumps({
        "seed": 5,
        "model": {"r": 8, "d": 8},
        "train": {"learning_rate": 0.001, "batch_size": 8, "max_epochs": 2, "patience": 1,
                  "show_progress": False},
        "paths": {"output_dir": "out", "log_dir": "logs"},
    }), encoding="utf-8")
    return path


def random_mask(rng: np.random.Generator, length: int) -> np.ndarray:
    true_len = int(rng.integers(1, length + 1))
    return np.arange(length) < true_len


# ==================== 远离不可导点的模型 ====================
# ReLU 输入接近 0 或最大池化出现近似并列时，中心差分会跨过折点。

KINK_MARGIN = 1e-3


def kink_margin(params, config: ModelConfig, batch) -> float:
    """一次前向传播中 ReLU 输入离 0 的最小距离与池化最大值和次大值的最小差距"""
    margins = []
    relu, max_over_time = ops.relu, ops.max_over_time

    def relu_spy(a):
        margins.append(float(np.min(np.abs(a.data))))
        return relu(a)

    def pool_spy(a, mask):
        rows = a.data[np.asarray(mask, dtype=bool)]
        if rows.shape[0] > 1:
            ranked = np.sort(rows, axis=0)
            margins.append(float(np.min(ranked[-1] - ranked[-2])))
        return max_over_time(a, mask)

    with pytest.MonkeyPatch.context() as mp:
        mp.setattr(ops, "relu", relu_spy)
        mp.setattr(ops, "max_over_time", pool_spy)
        forward(params, config, batch)
    return min(margins, default=float("inf"))


def smooth_model(config: ModelConfig, vocab: Vocabulary, batch, seed: int, attempts: int = 50):
    """
    偏置加上 U(0.1, 0.5) 的初始化（ReLU 单元大多处于激活区）；在 batch 上离折点太近的实例换子种子重抽。

    返回:
        (AmrParams, 实际使用的子种子)
    """
    for k in range(attempts):
        sub_seed = 1000 * seed + k
        params = init_model(config, vocab, seed=sub_seed)
        rng = np.random.default_rng(sub_seed)
        for name, t in params.trainable():
            if name.endswith(".bias"):
                t.data += rng.uniform(0.1, 0.5, size=t.shape)
        if kink_margin(params, config, batch) >= KINK_MARGIN:
            return params, sub_seed
    raise RuntimeError(f"种子 {seed}: {attempts} 次重抽后仍靠近不可导点")
