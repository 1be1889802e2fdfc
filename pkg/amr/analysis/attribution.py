"""
路径归因：最终预测跟随话语路径、对话路径，还是两者一致
"""

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from config import ModelConfig
from amr.data import Example, Vocabulary
from amr.errors import UnsupportedConfigError
from amr.model import AmrParams, head_labels, infer, predict_labels

logger = logging.getLogger(__name__)

UTTERANCE = "utterance"
CONVERSATION = "conversation"


@dataclass
class AttributionRecord:
    """
    单个样本的归因记录。

    属性:
        utterance_label / conversation_label: 两个分类头各自的预测
        combined_label: 合并输出的预测
        utterance_margin: o_u[1] − o_u[0]
        conversation_margin: α·(o_c[1] − o_c[0])，即对合并 logit 差的贡献
        dominant_path: 贡献绝对值更大的路径（相等时记为话语路径）
    """
    index: int
    label: Optional[int]
    utterance_label: int
    conversation_label: int
    combined_label: int
    utterance_margin: float
    conversation_margin: float
    dominant_path: str

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class AttributionSummary:
    total: int = 0
    combined_matches_utterance: int = 0
    combined_matches_conversation: int = 0
    heads_agree: int = 0
    heads_disagree: int = 0
    dominant_utterance: int = 0
    dominant_conversation: int = 0
    accuracy: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class AttributionResult:
    records: List[AttributionRecord]
    summary: AttributionSummary

    def system_predictions(self) -> Dict[str, np.ndarray]:
        """三个系统的预测：合并输出、话语路径头、对话路径头"""
        return {
            "AMR": np.array([r.combined_label for r in self.records], dtype=np.int64),
            "Utterance-only": np.array([r.utterance_label for r in self.records], dtype=np.int64),
            "Conversation-dependent": np.array([r.conversation_label for r in self.records], dtype=np.int64),
        }

    def save(self, records_path: Path, summary_path: Path) -> None:
        records_path, summary_path = Path(records_path), Path(summary_path)
        records_path.parent.mkdir(parents=True, exist_ok=True)
        with open(records_path, "w", encoding="utf-8") as f:
            for record in self.records:
                f.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")
        with open(summary_path, "w", encoding="utf-8") as f:
            json.dump(self.summary.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")


def path_attribution(
    params: AmrParams,
    config: ModelConfig,
    data: Sequence[Example],
    vocab: Vocabulary,
    batch_size: int = 32,
) -> AttributionResult:
    """
    逐样本比较两个分类头与合并输出的决策。

    异常:
        UnsupportedConfigError: 模型不是 both 模式
    """
    if config.path_mode != "both":
        raise UnsupportedConfigError(f"路径归因需要 both 模式，当前为 {config.path_mode}")
    if not data:
        raise ValueError("归因数据为空")

    probs, traces = infer(params, config, data, vocab, batch_size)
    combined = predict_labels(probs)
    summary = AttributionSummary(total=len(data))
    records: List[AttributionRecord] = []

    for k, (example, trace) in enumerate(zip(data, traces)):
        u_label = head_labels(trace.o_u)
        c_label = head_labels(trace.o_c)
        u_margin = float(trace.o_u[1] - trace.o_u[0])
        c_margin = float(trace.alpha * (trace.o_c[1] - trace.o_c[0]))
        dominant = UTTERANCE if abs(u_margin) >= abs(c_margin) else CONVERSATION
        record = AttributionRecord(
            index=k,
            label=example.label,
            utterance_label=u_label,
            conversation_label=c_label,
            combined_label=int(combined[k]),
            utterance_margin=u_margin,
            conversation_margin=c_margin,
            dominant_path=dominant,
        )
        records.append(record)

        summary.combined_matches_utterance += int(record.combined_label == u_label)
        summary.combined_matches_conversation += int(record.combined_label == c_label)
        if u_label == c_label:
            summary.heads_agree += 1
        else:
            summary.heads_disagree += 1
        if dominant == UTTERANCE:
            summary.dominant_utterance += 1
        else:
            summary.dominant_conversation += 1

    result = AttributionResult(records, summary)
    if all(ex.label is not None for ex in data):
        gold = np.array([ex.label for ex in data], dtype=np.int64)
        summary.accuracy = {
            name: float(np.mean(pred == gold)) for name, pred in result.system_predictions().items()
        }

    logger.info(
        f"路径归因: {summary.total} 个样本，两头一致 {summary.heads_agree}，"
        f"合并输出跟随话语路径 {summary.combined_matches_utterance}，跟随对话路径 {summary.combined_matches_conversation}"
    )
    return result
