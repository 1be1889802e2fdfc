"""
语料读取与预处理

语料为 UTF-8 JSONL，每行一个对象：
    {"comments": ["...", "..."], "response": "...", "label": 0 | 1}
评论按给定的时间顺序以单个空格拼接成一条评论。未知字段被忽略。
"""

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator

from amr.errors import CorpusFormatError

logger = logging.getLogger(__name__)

# 下划线按标点处理（Unicode 连接符标点）
_TOKEN_PATTERN = re.compile(r"[^\W_]+|[^\w\s]|_")

LABEL_NAMES = {0: "non-sarcastic", 1: "sarcastic"}


class CorpusRecord(BaseModel):
    """JSONL 单行记录的结构校验"""
    model_config = ConfigDict(extra="ignore", strict=True)

    comments: List[str]
    response: str
    label: Optional[int] = None

    @field_validator("comments", "response")
    @classmethod
    def _utf8_encodable(cls, value):
        for text in (value if isinstance(value, list) else [value]):
            try:
                text.encode("utf-8")
            except UnicodeEncodeError as e:
                raise ValueError(f"文本无法编码为 UTF-8（位置 {e.start} 的字符 {text[e.start]!r}）") from e
        return value


@dataclass(frozen=True)
class Example:
    """
    一条样本。

    属性:
        comment_tokens: 拼接后的评论词序列
        response_tokens: 回复词序列
        label: 0 = 非讽刺，1 = 讽刺；无标注语料为 None
    """
    comment_tokens: Tuple[str, ...]
    response_tokens: Tuple[str, ...]
    label: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "comment_tokens", tuple(self.comment_tokens))
        object.__setattr__(self, "response_tokens", tuple(self.response_tokens))

    @property
    def comment_length(self) -> int:
        return len(self.comment_tokens)

    @property
    def response_length(self) -> int:
        return len(self.response_tokens)

    def to_dict(self) -> Dict[str, Any]:
        """转换为语料文件格式（评论已拼接为一条）"""
        record: Dict[str, Any] = {
            "comments": [" ".join(self.comment_tokens)],
            "response": " ".join(self.response_tokens),
        }
        if self.label is not None:
            record["label"] = self.label
        return record


def tokenize(text: str) -> List[str]:
    """小写化、按空白切分，并把标点拆成独立的词"""
    return _TOKEN_PATTERN.findall(text.lower())


def parse_record(line: str, line_no: int, require_label: bool = True) -> Example:
    """解析并校验一行 JSONL"""
    try:
        payload = json.loads(line)
    except json.JSONDecodeError as e:
        raise CorpusFormatError(f"JSON 解析失败: {e.msg}", line_no) from e
    if not isinstance(payload, dict):
        raise CorpusFormatError("每行必须是 JSON 对象", line_no)

    try:
        record = CorpusRecord.model_validate(payload)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first.get("loc", ()))
        raise CorpusFormatError(f"字段 {where} 无效: {first.get('msg')}", line_no) from e

    if record.label is None and require_label:
        raise CorpusFormatError("缺少 label 字段", line_no)
    if record.label is not None and record.label not in LABEL_NAMES:
        raise CorpusFormatError(f"未知的标签值 {record.label}", line_no)

    comment_tokens = tokenize(" ".join(record.comments))
    response_tokens = tokenize(record.response)
    if not comment_tokens:
        raise CorpusFormatError("分词后评论为空", line_no)
    if not response_tokens:
        raise CorpusFormatError("分词后回复为空", line_no)
    return Example(comment_tokens, response_tokens, record.label)


def read_corpus_lines(path: Path, require_label: bool = True) -> Iterator[Tuple[int, Optional[Example]]]:
    """逐行读取 JSONL 语料，产出 (行号, 样本)；空行的样本为 None"""
    with open(Path(path), "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            yield line_no, (parse_record(line, line_no, require_label) if line.strip() else None)


def load_corpus(path: Path, require_label: bool = True) -> List[Example]:
    """
    读取 JSONL 语料，空行跳过。

    参数:
        path: 语料文件路径
        require_label: 是否要求每行带 label（预测输入可以不带）

    返回:
        List[Example]

    异常:
        CorpusFormatError: 任一行格式错误，消息中包含行号
    """
    path = Path(path)
    examples = [ex for _, ex in read_corpus_lines(path, require_label) if ex is not None]
    logger.info(f"读取语料 {path.name}: {len(examples)} 条样本")
    return examples


def write_corpus(examples: Sequence[Example], path: Path) -> Path:
    """把样本写成 JSONL 语料"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for ex in examples:
            f.write(json.dumps(ex.to_dict(), ensure_ascii=False) + "\n")
    return path


def truncate(example: Example, n_cap: int = 200, m_cap: int = 100) -> Example:
    """保留评论前 n_cap 个词、回复前 m_cap 个词，其余丢弃"""
    if n_cap <= 0 or m_cap <= 0:
        raise ValueError(f"截断长度必须为正数，实际 ({n_cap}, {m_cap})")
    if example.comment_length <= n_cap and example.response_length <= m_cap:
        return example
    return Example(example.comment_tokens[:n_cap], example.response_tokens[:m_cap], example.label)


def split_train_val(
    examples: Sequence[Example], fraction: float = 0.10, seed: int = 0
) -> Tuple[List[Example], List[Example]]:
    """
    随机留出验证集。

    参数:
        fraction: 验证集比例，须在 (0, 1) 内
        seed: 打乱种子

    返回:
        (train, val)：互不相交且并集等于输入
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"验证集比例必须在 (0, 1) 内，实际 {fraction}")
    order = np.random.default_rng(seed).permutation(len(examples))
    n_val = int(round(len(examples) * fraction))
    val = [examples[i] for i in order[:n_val]]
    train = [examples[i] for i in order[n_val:]]
    return train, val


@dataclass
class ClassStats:
    """单个类别的统计"""
    count: int = 0
    avg_comment: Optional[float] = None
    avg_response: Optional[float] = None


@dataclass
class CorpusStats:
    """语料统计（按类别计数与平均长度）"""
    total: int
    classes: Dict[str, ClassStats] = field(default_factory=dict)
    vocabulary: Optional[int] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "total": self.total,
            "vocabulary": self.vocabulary,
            "classes": {
                name: {
                    "count": s.count,
                    "avg_comment": s.avg_comment,
                    "avg_response": s.avg_response,
                }
                for name, s in self.classes.items()
            },
        }


def compute_stats(examples: Sequence[Example]) -> CorpusStats:
    """按类别统计样本数、平均评论长度与平均回复长度；空类别的均值为 None"""
    stats = CorpusStats(total=len(examples))
    vocab = set()
    for label, name in LABEL_NAMES.items():
        members = [ex for ex in examples if ex.label == label]
        s = ClassStats(count=len(members))
        if members:
            s.avg_comment = float(np.mean([ex.comment_length for ex in members]))
            s.avg_response = float(np.mean([ex.response_length for ex in members]))
        stats.classes[name] = s
    for ex in examples:
        vocab.update(ex.comment_tokens)
        vocab.update(ex.response_tokens)
    stats.vocabulary = len(vocab)
    return stats
