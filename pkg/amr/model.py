"""
AMR 网络

编码（共享 BiLSTM）→ 注意力（能量 e、双向软对齐）→ 增强与投影（共享 W_c, b_c）
→ 重读（共享 BiLSTM_c 与独立的 BiLSTM_u）→ 最大池化 → 双分类头 → α 加权合并。

消融开关见 config.ModelConfig；被移除路径的参数（包括 α）不会被分配。
"""

import logging
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from config import ModelConfig
from amr.data import Batch, EmbeddingMatrix, Example, Vocabulary, make_batches, random_embeddings, truncate
from amr.data.vocab import PAD_INDEX
from amr.engine import Tensor, ops
from amr.errors import ConfigError, DegenerateMaskError, DimensionError
from amr.layers import BiLstmParams, LinearParams, bilstm_forward, linear, linear_rows

logger = logging.getLogger(__name__)

N_CLASSES = 2


@dataclass
class AmrParams:
    """
    全部可训练参数，每个符号恰好对应一个张量组。

    属性:
        embeddings: 词向量 [V × r]
        encoder: 评论与回复共享的输入编码 BiLSTM
        reread_conv: BiLSTM_c，重读 p 与 q（共享）
        reread_utt: BiLSTM_u，重读回复编码 v̄
        projection: W_c, b_c（评论与回复共享）
        head_utt: U_u, a_u
        head_conv: U_c, a_c
        alpha: 合并权重 α（标量）
        *_response: 关闭共享时回复侧的独立参数
    """
    embeddings: Tensor
    encoder: BiLstmParams
    reread_conv: Optional[BiLstmParams] = None
    reread_utt: Optional[BiLstmParams] = None
    projection: Optional[LinearParams] = None
    head_utt: Optional[LinearParams] = None
    head_conv: Optional[LinearParams] = None
    alpha: Optional[Tensor] = None
    encoder_response: Optional[BiLstmParams] = None
    projection_response: Optional[LinearParams] = None
    reread_conv_response: Optional[BiLstmParams] = None

    def named_tensors(self) -> Iterator[Tuple[str, Tensor]]:
        """按固定顺序枚举所有参数张量（含冻结的词向量）"""
        yield "embeddings", self.embeddings
        yield from self.encoder.named_tensors("encoder")
        for name in ("encoder_response", "reread_conv", "reread_conv_response", "reread_utt",
                     "projection", "projection_response", "head_utt", "head_conv"):
            group = getattr(self, name)
            if group is not None:
                yield from group.named_tensors(name)
        if self.alpha is not None:
            yield "alpha", self.alpha

    def trainable(self) -> Iterator[Tuple[str, Tensor]]:
        for name, t in self.named_tensors():
            if t.requires_grad:
                yield name, t

    def snapshot(self) -> Dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.named_tensors()}

    def restore(self, values: Dict[str, np.ndarray]) -> None:
        for name, t in self.named_tensors():
            t.data[...] = values[name]

    @property
    def response_encoder(self) -> BiLstmParams:
        return self.encoder_response or self.encoder

    @property
    def response_projection(self) -> Optional[LinearParams]:
        return self.projection_response or self.projection

    @property
    def response_reread(self) -> Optional[BiLstmParams]:
        return self.reread_conv_response or self.reread_conv


@dataclass
class ForwardTrace:
    """
    单个样本的前向记录，供可解释性分析使用。

    属性:
        energies: 注意力能量 e（填充后的完整张量，参与计算记录）
        attention_over_response: 行归一化的注意力 [n × m]（只含真实长度）
        attention_over_comment: 列归一化的注意力 [n × m]
        o_u / o_c: 两个分类头的输出
        probabilities: 最终概率 [2]
    """
    comment_length: int
    response_length: int
    energies: Optional[Tensor] = None
    attention_over_response: Optional[np.ndarray] = None
    attention_over_comment: Optional[np.ndarray] = None
    o_u: Optional[np.ndarray] = None
    o_c: Optional[np.ndarray] = None
    alpha: Optional[float] = None
    probabilities: Optional[np.ndarray] = None

    def energy_matrix(self) -> Optional[np.ndarray]:
        if self.energies is None:
            return None
        return self.energies.data[:self.comment_length, :self.response_length].copy()


# ==================== 参数初始化 ====================

def init_model(
    config: ModelConfig,
    vocab: Vocabulary,
    pretrained: Optional[EmbeddingMatrix] = None,
    seed: int = 0,
) -> AmrParams:
    """
    按配置分配全部参数。

    参数:
        config: 模型配置
        vocab: 词表
        pretrained: 预训练词向量；缺省时按 [-0.05, 0.05] 随机初始化
        seed: 初始化种子

    返回:
        AmrParams：α 初始化为 1.0
    """
    rng = np.random.default_rng(seed)
    d, r = config.d, config.r

    if pretrained is None:
        pretrained = random_embeddings(len(vocab), r, int(rng.integers(2**31)))
    if pretrained.values.shape != (len(vocab), r):
        raise ConfigError(f"词向量形状 {pretrained.values.shape} 与 (词表 {len(vocab)}, r={r}) 不符")
    table = pretrained.values.data.copy()
    table[PAD_INDEX] = 0.0

    params = AmrParams(
        embeddings=Tensor(table, requires_grad=config.train_embeddings, name="embeddings"),
        encoder=BiLstmParams.init(r, d, rng),
    )
    if not config.share_encoder:
        params.encoder_response = BiLstmParams.init(r, d, rng)

    if config.has_conversation_path:
        if config.use_attention:
            params.projection = LinearParams.init(config.aug_width, d, rng)
            if not config.share_projection:
                params.projection_response = LinearParams.init(config.aug_width, d, rng)
        if config.use_rereading:
            params.reread_conv = BiLstmParams.init(config.reread_conv_in, d, rng)
            if not config.share_reread:
                params.reread_conv_response = BiLstmParams.init(config.reread_conv_in, d, rng)
        params.head_conv = LinearParams.init(config.head_width, N_CLASSES, rng)

    if config.has_utterance_path:
        if config.use_rereading:
            params.reread_utt = BiLstmParams.init(2 * d, d, rng)
        params.head_utt = LinearParams.init(2 * d, N_CLASSES, rng)

    if config.path_mode == "both":
        params.alpha = Tensor(1.0, requires_grad=True, name="alpha")

    logger.debug(f"模型参数初始化完成: {parameter_count(params)} 个可训练标量")
    return params


def parameter_count(params: AmrParams) -> int:
    """可训练标量总数（冻结的词向量不计入）"""
    return sum(t.size for _, t in params.trainable())


# ==================== 各阶段 ====================

def encode(params: AmrParams, batch: Batch) -> Tuple[List[Tensor], List[Tensor]]:
    """
    查表后用编码 BiLSTM 分别读取评论与回复。

    返回:
        (ū 列表, v̄ 列表)：每个样本一个 [n_max × 2d] / [m_max × 2d] 张量，填充行为零
    """
    n_max = batch.comment_ids.shape[1]
    m_max = batch.response_ids.shape[1]
    comments = ops.embedding(params.embeddings, batch.comment_ids.reshape(-1))
    responses = ops.embedding(params.embeddings, batch.response_ids.reshape(-1))
    u_bars, v_bars = [], []
    for b in range(batch.size):
        u = ops.slice_rows(comments, b * n_max, (b + 1) * n_max)
        v = ops.slice_rows(responses, b * m_max, (b + 1) * m_max)
        u_bars.append(bilstm_forward(params.encoder, u, batch.comment_mask[b]))
        v_bars.append(bilstm_forward(params.response_encoder, v, batch.response_mask[b]))
    return u_bars, v_bars


def attention_energies(u_bar: Tensor, v_bar: Tensor) -> Tensor:
    """e_ij = ū_i · v̄_j，结果为 [n × m]；涉及屏蔽位置的元素由后续归一化排除"""
    if u_bar.data.ndim != 2 or v_bar.data.ndim != 2 or u_bar.shape[1] != v_bar.shape[1]:
        raise DimensionError(f"attention_energies: 宽度不一致 {u_bar.shape} vs {v_bar.shape}")
    return ops.matmul(u_bar, ops.transpose(v_bar))


def attend(
    energies: Tensor,
    u_bar: Tensor,
    v_bar: Tensor,
    comment_mask: np.ndarray,
    response_mask: np.ndarray,
) -> Tuple[Tensor, Tensor, Tensor, Tensor]:
    """
    双向软对齐。

    ũ_i = Σ_j softmax_j(e_i·) v̄_j；ṽ_j = Σ_i softmax_i(e_·j) ū_i。
    屏蔽位置同时从两个归一化中排除。

    返回:
        (ũ [n × 2d], ṽ [m × 2d], 行归一化注意力 [n × m], 列归一化注意力的转置 [m × n])
    """
    comment_mask = np.asarray(comment_mask, dtype=bool)
    response_mask = np.asarray(response_mask, dtype=bool)
    if not comment_mask.any() or not response_mask.any():
        raise DegenerateMaskError("attend: 被对齐的序列完全被屏蔽")
    pair_mask = np.outer(comment_mask, response_mask)
    over_response = ops.softmax_masked(energies, pair_mask, allow_empty_rows=True)
    over_comment_t = ops.softmax_masked(ops.transpose(energies), pair_mask.T, allow_empty_rows=True)
    u_tilde = ops.matmul(over_response, v_bar)
    v_tilde = ops.matmul(over_comment_t, u_bar)
    return u_tilde, v_tilde, over_response, over_comment_t


def _term_groups(config: ModelConfig, base: Tensor, other: Tensor) -> List[Tensor]:
    groups = []
    if config.aug_identity:
        groups.extend([base, other])
    if config.aug_diff:
        groups.append(ops.sub(base, other))
    if config.aug_prod:
        groups.append(ops.mul(base, other))
    if not groups:
        raise ConfigError("没有启用任何增强项")
    return groups


def augment_project(
    projection: LinearParams,
    config: ModelConfig,
    base: Tensor,
    attended: Tensor,
    dropout_rate: float = 0.0,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """
    拼接启用的增强块 [base, attended, base−attended, base⊙attended]，
    经共享投影 (W_c, b_c) 与 ReLU 映射到 d 维。

    返回:
        Tensor: [T × d]，全部非负
    """
    if base.shape != attended.shape:
        raise DimensionError(f"augment_project: 形状不一致 {base.shape} vs {attended.shape}")
    features = ops.concat_last(_term_groups(config, base, attended))
    features = ops.dropout(features, dropout_rate, training, rng)
    return ops.relu(linear_rows(projection, features))


def reread_and_pool(
    params: AmrParams,
    config: ModelConfig,
    p: Optional[Tensor],
    q: Optional[Tensor],
    v_bar: Tensor,
    comment_mask: np.ndarray,
    response_mask: np.ndarray,
) -> Tuple[Optional[Tensor], Optional[Tensor], Optional[Tensor]]:
    """
    p̄ = BiLSTM_c(p)，q̄ = BiLSTM_c(q)（共享参数），x̄ = BiLSTM_u(v̄)，再分别在未屏蔽步上最大池化。
    关闭重读时直接池化 p、q、v̄。

    返回:
        (p̃, q̃, x̃)，均为 [2d]（关闭重读且开启注意力时 p̃、q̃ 为 [d]）；
        不存在的路径返回 None
    """
    p_tilde = q_tilde = x_tilde = None
    if config.has_conversation_path:
        if p is None or q is None:
            raise ConfigError("对话路径缺少输入序列")
        if config.use_rereading:
            p = bilstm_forward(params.reread_conv, p, comment_mask)
            q = bilstm_forward(params.response_reread, q, response_mask)
        p_tilde = ops.max_over_time(p, comment_mask)
        q_tilde = ops.max_over_time(q, response_mask)
    if config.has_utterance_path:
        x_bar = bilstm_forward(params.reread_utt, v_bar, response_mask) if config.use_rereading else v_bar
        x_tilde = ops.max_over_time(x_bar, response_mask)
    return p_tilde, q_tilde, x_tilde


def combine_logits(
    o_u: Optional[Tensor], o_c: Optional[Tensor], alpha: Optional[Tensor], path_mode: str
) -> Tensor:
    """按路径模式合并两个分类头：o_u + α·o_c / 只用 o_u / 只用 o_c"""
    if path_mode == "utterance_only":
        if o_u is None:
            raise ConfigError("utterance_only 模式缺少 o_u")
        return o_u
    if path_mode == "conversation_only":
        if o_c is None:
            raise ConfigError("conversation_only 模式缺少 o_c")
        return o_c
    if o_u is None or o_c is None or alpha is None:
        raise ConfigError("both 模式需要 o_u、o_c 与 α")
    return ops.add(o_u, ops.mul_scalar(o_c, alpha))


def softmax_vector(logits: Tensor) -> Tensor:
    width = logits.shape[0]
    row = ops.reshape(logits, (1, width))
    return ops.reshape(ops.softmax_masked(row, np.ones((1, width), dtype=bool)), (width,))


def classify(
    params: AmrParams,
    config: ModelConfig,
    p_tilde: Optional[Tensor],
    q_tilde: Optional[Tensor],
    x_tilde: Optional[Tensor],
    dropout_rate: float = 0.0,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[Optional[Tensor], Optional[Tensor], Tensor]:
    """
    o_u = U_u x̃ + a_u；o_c = U_c [p̃, q̃, p̃−q̃, p̃⊙q̃] + a_c（按增强开关取块）；
    输出 softmax(o_u + α·o_c)。

    返回:
        (o_u, o_c, probabilities)
    """
    o_u = o_c = None
    if config.has_utterance_path:
        if x_tilde is None:
            raise ConfigError("缺少话语路径向量 x̃")
        o_u = linear(params.head_utt, ops.dropout(x_tilde, dropout_rate, training, rng))
    if config.has_conversation_path:
        if p_tilde is None or q_tilde is None:
            raise ConfigError("缺少对话路径向量 p̃ / q̃")
        head_in = ops.concat_last(_term_groups(config, p_tilde, q_tilde))
        o_c = linear(params.head_conv, ops.dropout(head_in, dropout_rate, training, rng))
    logits = combine_logits(o_u, o_c, params.alpha, config.path_mode)
    return o_u, o_c, softmax_vector(logits)


def forward(
    params: AmrParams,
    config: ModelConfig,
    batch: Batch,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
    dropout_rate: float = 0.5,
    energy_overrides: Optional[Dict[int, np.ndarray]] = None,
) -> Tuple[Tensor, List[ForwardTrace]]:
    """
    完整前向传播。

    参数:
        training: 训练模式下在投影输入与两个分类头输入上应用 dropout
        rng: dropout 随机数生成器（训练模式必需）
        dropout_rate: dropout 比例
        energy_overrides: {批内下标: 能量矩阵}，用常量替换对应样本的注意力能量（有限差分校验用）

    返回:
        (probabilities [B × 2], 每个样本的 ForwardTrace)
    """
    rate = dropout_rate if training else 0.0
    u_bars, v_bars = encode(params, batch)
    rows: List[Tensor] = []
    traces: List[ForwardTrace] = []

    for b in range(batch.size):
        c_mask = batch.comment_mask[b]
        r_mask = batch.response_mask[b]
        u_bar, v_bar = u_bars[b], v_bars[b]
        trace = ForwardTrace(int(c_mask.sum()), int(r_mask.sum()))
        p = q = None

        if config.has_conversation_path:
            if config.use_attention:
                e = attention_energies(u_bar, v_bar)
                if energy_overrides and b in energy_overrides:
                    e = Tensor(energy_overrides[b])
                u_tilde, v_tilde, over_resp, over_comm_t = attend(e, u_bar, v_bar, c_mask, r_mask)
                n, m = trace.comment_length, trace.response_length
                trace.energies = e
                trace.attention_over_response = over_resp.data[:n, :m].copy()
                trace.attention_over_comment = over_comm_t.data.T[:n, :m].copy()
                p = augment_project(params.projection, config, u_bar, u_tilde, rate, training, rng)
                q = augment_project(params.response_projection, config, v_bar, v_tilde, rate, training, rng)
            else:
                p, q = u_bar, v_bar

        p_tilde, q_tilde, x_tilde = reread_and_pool(params, config, p, q, v_bar, c_mask, r_mask)
        o_u, o_c, probs = classify(params, config, p_tilde, q_tilde, x_tilde, rate, training, rng)

        trace.o_u = None if o_u is None else o_u.data.copy()
        trace.o_c = None if o_c is None else o_c.data.copy()
        trace.alpha = None if params.alpha is None else params.alpha.item()
        trace.probabilities = probs.data.copy()
        rows.append(probs)
        traces.append(trace)

    return ops.stack_rows(rows), traces


def predict_labels(probabilities: np.ndarray) -> np.ndarray:
    """argmax 预测；恰好 0.5 的平局判为 0"""
    probabilities = np.asarray(probabilities)
    return (probabilities[..., 1] > probabilities[..., 0]).astype(np.int64)


def head_labels(logits: Optional[np.ndarray]) -> Optional[int]:
    """单个分类头的预测（对 softmax 取 argmax 等价于对 logits 取 argmax）"""
    if logits is None:
        return None
    return int(logits[1] > logits[0])


def infer(
    params: AmrParams,
    config: ModelConfig,
    examples: Sequence[Example],
    vocab: Vocabulary,
    batch_size: int = 32,
) -> Tuple[np.ndarray, List[ForwardTrace]]:
    """
    推理模式批量前向（不做 dropout，不记录计算）。

    返回:
        (probabilities [N × 2], 按输入顺序排列的 ForwardTrace 列表)
    """
    if not examples:
        raise ValueError("没有可推理的样本")
    examples = [truncate(ex, config.n_cap, config.m_cap) for ex in examples]
    probs: List[np.ndarray] = []
    traces: List[ForwardTrace] = []
    for batch in make_batches(examples, vocab, batch_size):
        out, batch_traces = forward(params, config, batch, training=False)
        probs.append(out.data)
        traces.extend(batch_traces)
    return np.concatenate(probs, axis=0), traces


__all__: Sequence[str] = [
    "AmrParams", "ForwardTrace", "init_model", "parameter_count", "encode",
    "attention_energies", "attend", "augment_project", "reread_and_pool", "classify",
    "combine_logits", "forward", "predict_labels", "head_labels", "infer", "N_CLASSES",
]
