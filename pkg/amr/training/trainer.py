"""
训练循环：损失、逐轮训练与基于验证集准确率的早停
"""

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from tqdm import tqdm

from config import ModelConfig, TrainConfig, derive_seed
from amr.data import EmbeddingMatrix, Example, Vocabulary, make_batches, truncate
from amr.engine import Recording, Tensor, ops
from amr.model import AmrParams, forward, infer, init_model, predict_labels
from .optimizer import AdamState, adam_step

logger = logging.getLogger(__name__)

LOG_FLOOR = 1e-12


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_accuracy: float

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


@dataclass
class TrainResult:
    """
    训练结果。

    属性:
        params: 验证集准确率最高那一轮的参数
        history: 每轮记录
        best_epoch: 最佳轮次（从 1 开始）
        best_val_accuracy: 最佳验证集准确率
        stopped_early: 是否因耐心耗尽而提前停止
    """
    params: AmrParams
    history: List[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_val_accuracy: float = 0.0
    stopped_early: bool = False


def nll_loss(probabilities: Tensor, labels: Sequence[int]) -> Tensor:
    """
    平均负对数似然：mean(−log p[真实类别])，log 内下限为 1e-12。

    异常:
        ValueError: 标签不在 {0, 1} 中，或与批大小不一致
    """
    labels = np.asarray(labels, dtype=np.int64)
    if probabilities.data.ndim != 2 or labels.shape != (probabilities.shape[0],):
        raise ValueError(f"标签形状 {labels.shape} 与概率形状 {probabilities.shape} 不一致")
    if np.any((labels != 0) & (labels != 1)):
        raise ValueError(f"标签必须是 0 或 1，实际 {sorted(set(labels.tolist()))}")
    picked = ops.gather(probabilities, np.arange(labels.shape[0]), labels)
    return ops.scale(ops.mean(ops.log(picked, floor=LOG_FLOOR)), -1.0)


def accuracy(params: AmrParams, config: ModelConfig, examples: Sequence[Example],
             vocab: Vocabulary, batch_size: int = 32) -> float:
    probs, _ = infer(params, config, examples, vocab, batch_size)
    labels = np.array([ex.label for ex in examples], dtype=np.int64)
    return float(np.mean(predict_labels(probs) == labels))


def train_loop(
    model_config: ModelConfig,
    train: Sequence[Example],
    val: Sequence[Example],
    train_config: TrainConfig,
    vocab: Vocabulary,
    pretrained: Optional[EmbeddingMatrix] = None,
    on_epoch: Optional[Callable[[EpochRecord], None]] = None,
) -> TrainResult:
    """
    逐轮训练：打乱 → 分批 → 前向 → 损失 → 反向 → Adam；每轮结束后在验证集上评估。

    保留验证集准确率最高（严格提升）那一轮的参数；连续 patience 轮没有提升后停止。

    参数:
        model_config: 模型配置
        train / val: 训练集与验证集（非空，需带标注）
        train_config: 训练配置，其 seed 派生 init / shuffle / dropout 子种子
        vocab: 词表
        pretrained: 预训练词向量
        on_epoch: 每轮结束的回调（写 history 用）

    返回:
        TrainResult
    """
    if not train or not val:
        raise ValueError("训练集与验证集都不能为空")

    train = [truncate(ex, model_config.n_cap, model_config.m_cap) for ex in train]
    seed = train_config.seed
    params = init_model(model_config, vocab, pretrained, seed=derive_seed(seed, "init"))
    dropout_rng = np.random.default_rng(derive_seed(seed, "dropout"))
    shuffle_seed = derive_seed(seed, "shuffle")
    state = AdamState()

    result = TrainResult(params=params, best_val_accuracy=-1.0)
    best_values = params.snapshot()
    stale = 0

    for epoch in range(1, train_config.max_epochs + 1):
        batches = make_batches(train, vocab, train_config.batch_size, seed=shuffle_seed + epoch)
        total_loss = 0.0
        with tqdm(total=len(batches), desc=f"📈 第 {epoch} 轮", unit="批", ncols=100,
                  disable=not train_config.show_progress) as pbar:
            for batch in batches:
                with Recording() as rec:
                    probs, _ = forward(params, model_config, batch, training=True,
                                       rng=dropout_rng, dropout_rate=train_config.dropout_rate)
                    loss = nll_loss(probs, batch.labels)
                grads = rec.backward(loss)
                adam_step(params.named_tensors(), grads, state, train_config.learning_rate)
                total_loss += loss.item() * batch.size
                pbar.set_postfix(loss=f"{loss.item():.4f}")
                pbar.update(1)

        record = EpochRecord(
            epoch=epoch,
            train_loss=total_loss / len(train),
            val_accuracy=accuracy(params, model_config, val, vocab, train_config.batch_size),
        )
        result.history.append(record)
        if on_epoch is not None:
            on_epoch(record)

        improved = record.val_accuracy > result.best_val_accuracy
        if improved:
            result.best_val_accuracy = record.val_accuracy
            result.best_epoch = epoch
            best_values = params.snapshot()
            stale = 0
        else:
            stale += 1
        logger.info(
            f"第 {epoch} 轮: loss={record.train_loss:.4f} val_acc={record.val_accuracy:.4f}"
            f"{' ★' if improved else ''}"
        )
        if stale > train_config.patience:
            logger.info(f"验证集准确率连续 {stale} 轮没有提升，提前停止")
            result.stopped_early = True
            break

    params.restore(best_values)
    logger.info(f"最佳轮次: {result.best_epoch}，验证集准确率 {result.best_val_accuracy:.4f}")
    return result


def write_history(history: Sequence[EpochRecord], path: Path) -> Path:
    """每轮一行 JSON：epoch, train_loss, val_accuracy"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for record in history:
            f.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")
    return path
