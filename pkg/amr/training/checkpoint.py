"""
检查点读写

二进制格式（小端）：
    magic       8 字节  b"AMRCKPT\\0"
    version     u32
    header_len  u32，随后是 UTF-8 JSON 头（sort_keys）：config / gate_order / vocab
    count       u32
    每个张量：name_len u32、name、rank u32、rank 个 u32 维度、float32 数据（行优先）
"""

import json
import logging
import struct
from pathlib import Path
from typing import BinaryIO, Tuple

import numpy as np
from pydantic import ValidationError

from config import ModelConfig
from amr.data import Vocabulary
from amr.errors import CheckpointError
from amr.layers import GATE_ORDER
from amr.model import AmrParams, init_model

logger = logging.getLogger(__name__)

MAGIC = b"AMRCKPT\x00"
FORMAT_VERSION = 1
_U32 = struct.Struct("<I")


def _write_u32(f: BinaryIO, value: int) -> None:
    f.write(_U32.pack(value))


def _read_exact(f: BinaryIO, n: int) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise CheckpointError("检查点文件被截断")
    return data


def _read_u32(f: BinaryIO) -> int:
    return _U32.unpack(_read_exact(f, 4))[0]


def save_checkpoint(params: AmrParams, config: ModelConfig, vocab: Vocabulary, path: Path) -> Path:
    """
    保存参数、模型配置与词表。

    参数值以 32 位浮点存储；同一组参数重复保存得到逐字节相同的文件。
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        header = json.dumps(
            {"config": config.model_dump(), "gate_order": GATE_ORDER, "vocab": vocab.tokens},
            sort_keys=True,
            ensure_ascii=False,
        ).encode("utf-8")
    except UnicodeEncodeError as e:
        raise CheckpointError(f"词表包含无法编码为 UTF-8 的词: {e.object[e.start:e.end]!r}") from e
    tensors = list(params.named_tensors())

    with open(path, "wb") as f:
        f.write(MAGIC)
        _write_u32(f, FORMAT_VERSION)
        _write_u32(f, len(header))
        f.write(header)
        _write_u32(f, len(tensors))
        for name, tensor in tensors:
            encoded = name.encode("utf-8")
            _write_u32(f, len(encoded))
            f.write(encoded)
            _write_u32(f, tensor.data.ndim)
            for extent in tensor.shape:
                _write_u32(f, extent)
            f.write(np.ascontiguousarray(tensor.data, dtype="<f4").tobytes())

    logger.info(f"检查点已保存: {path} ({len(tensors)} 个张量)")
    return path


def load_checkpoint(path: Path) -> Tuple[AmrParams, ModelConfig, Vocabulary]:
    """
    读取检查点，按内嵌配置重建参数并校验每个张量的名称与形状。

    返回:
        (params, config, vocab)

    异常:
        CheckpointError: magic / 版本 / 门顺序不符，文件被截断，或张量与配置不一致
    """
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"检查点文件不存在: {path}")

    with open(path, "rb") as f:
        if _read_exact(f, len(MAGIC)) != MAGIC:
            raise CheckpointError(f"{path} 不是 AMR 检查点（magic 不匹配）")
        version = _read_u32(f)
        if version != FORMAT_VERSION:
            raise CheckpointError(f"不支持的检查点版本 {version}（期望 {FORMAT_VERSION}）")
        try:
            header = json.loads(_read_exact(f, _read_u32(f)).decode("utf-8"))
            config = ModelConfig(**header["config"])
            vocab = Vocabulary.from_tokens(header["vocab"])
        except (ValueError, KeyError, ValidationError) as e:
            raise CheckpointError(f"检查点头部无效: {e}") from e
        if header.get("gate_order") != GATE_ORDER:
            raise CheckpointError(f"门顺序 {header.get('gate_order')!r} 与 {GATE_ORDER!r} 不符")

        params = init_model(config, vocab, seed=0)
        expected = dict(params.named_tensors())
        count = _read_u32(f)
        if count != len(expected):
            raise CheckpointError(f"张量数量 {count} 与配置要求的 {len(expected)} 不符")

        for _ in range(count):
            name = _read_exact(f, _read_u32(f)).decode("utf-8")
            rank = _read_u32(f)
            shape = tuple(_read_u32(f) for _ in range(rank))
            target = expected.get(name)
            if target is None:
                raise CheckpointError(f"检查点包含未知张量 {name!r}")
            if shape != target.shape:
                raise CheckpointError(f"张量 {name} 形状 {shape} 与配置要求的 {target.shape} 不符")
            n_values = int(np.prod(shape, dtype=np.int64))
            values = np.frombuffer(_read_exact(f, 4 * n_values), dtype="<f4")
            target.data[...] = values.astype(np.float64).reshape(shape)

        if f.read(1):
            raise CheckpointError("检查点末尾有多余数据")

    logger.info(f"检查点已加载: {path}")
    return params, config, vocab
