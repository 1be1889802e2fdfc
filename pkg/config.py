import hashlib
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

import json5  # 用于加载带注释的配置文件
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from amr.errors import ConfigError

logger = logging.getLogger(__name__)

# 1. 定义基础路径：获取当前脚本所在目录作为项目根目录
PROJECT_ROOT = Path(__file__).resolve().parent

PathMode = Literal["both", "utterance_only", "conversation_only"]


class ModelConfig(BaseModel):
    """
    模型结构配置：维度、截断长度与消融开关。

    属性:
        r: 词向量维度
        d: 隐状态维度（BiLSTM 每个方向）
        n_cap / m_cap: 评论 / 回复最大长度
        path_mode: both | utterance_only | conversation_only
        use_attention / use_rereading: 是否保留注意力 / 重读阶段
        aug_identity / aug_diff / aug_prod: 增强项 [base, attended] / 差 / 积 是否启用
        train_embeddings: 训练时是否更新词向量
        share_encoder / share_projection / share_reread: 评论与回复是否共享参数
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    r: int = Field(300, gt=0, description="词向量维度")
    d: int = Field(300, gt=0, description="隐状态维度")
    n_cap: int = Field(200, gt=0, description="评论最大长度")
    m_cap: int = Field(100, gt=0, description="回复最大长度")
    path_mode: PathMode = "both"
    use_attention: bool = True
    use_rereading: bool = True
    aug_diff: bool = True
    aug_prod: bool = True
    aug_identity: bool = True
    train_embeddings: bool = True
    share_encoder: bool = True
    share_projection: bool = True
    share_reread: bool = True

    @model_validator(mode="after")
    def _check_terms(self) -> "ModelConfig":
        if self.has_conversation_path and self.term_groups == 0:
            raise ValueError("对话路径至少需要启用一个增强项（identity / diff / prod）")
        return self

    @property
    def has_utterance_path(self) -> bool:
        return self.path_mode in ("both", "utterance_only")

    @property
    def has_conversation_path(self) -> bool:
        return self.path_mode in ("both", "conversation_only")

    @property
    def term_groups(self) -> int:
        """启用的增强块数量（identity 计为 base 与 attended 两块）"""
        return 2 * int(self.aug_identity) + int(self.aug_diff) + int(self.aug_prod)

    @property
    def aug_width(self) -> int:
        return 2 * self.d * self.term_groups

    @property
    def pooled_conv_width(self) -> int:
        """p̃ / q̃ 的宽度：关闭重读且开启注意力时直接池化投影结果（d 维）"""
        return self.d if (self.use_attention and not self.use_rereading) else 2 * self.d

    @property
    def head_width(self) -> int:
        return self.pooled_conv_width * self.term_groups

    @property
    def reread_conv_in(self) -> int:
        return self.d if self.use_attention else 2 * self.d


class TrainConfig(BaseModel):
    """
    训练配置。

    属性:
        learning_rate: Adam 初始学习率
        batch_size: 批大小
        dropout_rate: 前馈连接上的 dropout 比例
        max_epochs: 最大轮数
        patience: 验证集准确率连续多少轮不提升后停止
        seed: 随机种子（由命令行的 --seed 统一派生）
        val_fraction: 没有单独验证集时从训练集留出的比例
        show_progress: 是否显示 tqdm 进度条
    """
    model_config = ConfigDict(extra="forbid")

    learning_rate: float = Field(1e-4, gt=0)
    batch_size: int = Field(32, gt=0)
    dropout_rate: float = Field(0.5, ge=0, lt=1)
    max_epochs: int = Field(20, gt=0)
    patience: int = Field(5, ge=0)
    seed: int = 0
    val_fraction: float = Field(0.10, gt=0, lt=1)
    show_progress: bool = True


# ==================== 消融变体 ====================
# 名称 -> (表格行名, 相对默认配置的开关)
VARIANTS: Dict[str, Tuple[str, Dict[str, Any]]] = {
    "amr": ("AMR", {}),
    "conversation-only": ("Conversation-dependent", {"path_mode": "conversation_only"}),
    "utterance-only": ("Utterance-only", {"path_mode": "utterance_only"}),
    "no-attention": ("AMR - Attention", {"use_attention": False}),
    "no-rereading": ("AMR - Re-Reading", {"use_rereading": False}),
    "no-rereading-no-attention": ("AMR - Re-Reading - Attention",
                                  {"use_rereading": False, "use_attention": False}),
    "no-diff": ("AMR - difference", {"aug_diff": False}),
    "no-prod": ("AMR - element-wise product", {"aug_prod": False}),
    "no-diff-no-prod": ("AMR - element-wise product - difference",
                        {"aug_diff": False, "aug_prod": False}),
    "only-prod": ("AMR with only element-wise product",
                  {"aug_identity": False, "aug_diff": False}),
    "frozen-embeddings": ("AMR - train embedding", {"train_embeddings": False}),
}


def expand_variant(name: str) -> Dict[str, Any]:
    """把变体名展开为 ModelConfig 开关"""
    if name not in VARIANTS:
        raise ConfigError(f"未知变体 {name!r}，可选: {', '.join(VARIANTS)}")
    return dict(VARIANTS[name][1])


def variant_label(name: str) -> str:
    return VARIANTS[name][0]


def derive_seed(seed: int, name: str) -> int:
    """从总种子派生命名子种子（init / shuffle / dropout / split / embeddings）"""
    digest = hashlib.md5(f"{seed}:{name}".encode("utf-8")).hexdigest()
    return int(digest[:8], 16)


# 配置文件 paths 段的键 -> Settings 属性
PATH_KEYS: Dict[str, str] = {
    "train": "TRAIN_PATH",
    "val": "VAL_PATH",
    "test": "TEST_PATH",
    "embeddings": "EMBEDDINGS_PATH",
    "checkpoint": "CHECKPOINT_PATH",
    "output_dir": "OUTPUT_DIR",
    "log_dir": "LOG_DIR",
}


class Settings(BaseSettings):
    """
    运行配置，集中管理路径、种子、变体与模型/训练参数。

    优先级：命令行参数 > 运行配置文件 > 环境变量（AMR_ 前缀）> 默认值
    """
    # ==================== 路径配置 ====================
    PROJECT_ROOT: Path = PROJECT_ROOT
    LOG_DIR: Path = PROJECT_ROOT / "logs"
    OUTPUT_DIR: Path = PROJECT_ROOT / "outputs"

    TRAIN_PATH: Optional[Path] = None  # 训练语料
    VAL_PATH: Optional[Path] = None  # 验证语料（缺省时从训练集留出）
    TEST_PATH: Optional[Path] = None  # 测试语料
    EMBEDDINGS_PATH: Optional[Path] = None  # GloVe 词向量（缺省时随机初始化）
    CHECKPOINT_PATH: Optional[Path] = None  # 检查点

    # ==================== 实验配置 ====================
    SEED: int = 13
    VARIANT: str = "amr"
    MODEL_OVERRIDES: Dict[str, Any] = Field(default_factory=dict)  # 显式指定的模型开关
    TRAIN: TrainConfig = Field(default_factory=TrainConfig)

    # ==================== Pydantic Settings配置 ====================
    model_config = SettingsConfigDict(
        env_prefix="AMR_",
        env_file=".env",
        env_file_encoding="utf-8",
        env_nested_delimiter="__",  # 嵌套配置使用__分隔符，如AMR_TRAIN__BATCH_SIZE
        extra="ignore"
    )

    def load_from_run_config(self, config_path: Optional[Path] = None) -> Dict[str, Any]:
        """
        从运行配置文件（json5）加载配置并覆盖默认值。

        相对路径按配置文件所在目录解析。

        参数:
            config_path: 配置文件路径，默认为 PROJECT_ROOT/run_config.json

        返回:
            dict: 原始配置字典

        异常:
            ConfigError: 显式指定的文件不存在或内容无效
        """
        explicit = config_path is not None
        if config_path is None:
            config_path = self.PROJECT_ROOT / "run_config.json"
        config_path = Path(config_path)

        if not config_path.exists():
            if explicit:
                raise ConfigError(f"配置文件不存在: {config_path}")
            logger.warning(f"未找到配置文件 {config_path}，使用默认配置")
            return {}

        try:
            with open(config_path, "r", encoding="utf-8") as f:
                config = json5.load(f)
        except ValueError as e:
            raise ConfigError(f"配置文件 {config_path} 解析失败: {e}") from e

        base = config_path.resolve().parent

        if "seed" in config:
            self.SEED = int(config["seed"])
        if "variant" in config:
            self.VARIANT = config["variant"]

        # 加载路径配置
        paths = config.get("paths", {})
        for key, attr in PATH_KEYS.items():
            if paths.get(key):
                setattr(self, attr, base / paths[key])

        # 模型开关：记录为显式覆盖，变体展开后再应用
        if "model" in config:
            self.MODEL_OVERRIDES.update(config["model"])

        if "train" in config:
            try:
                self.TRAIN = TrainConfig(**{**self.TRAIN.model_dump(), **config["train"]})
            except ValidationError as e:
                raise ConfigError(f"训练配置无效: {e}") from e

        return config

    def set_value(self, key: str, value: Any) -> None:
        """
        按点分键设置单个值，如 model.d、train.batch_size、paths.train、seed。

        异常:
            ConfigError: 键未知或值无效
        """
        section, _, name = key.partition(".")
        if not name:
            if section == "seed":
                self.SEED = int(value)
            elif section == "variant":
                self.VARIANT = str(value)
            else:
                raise ConfigError(f"未知配置键 {key!r}")
        elif section == "model":
            if name not in ModelConfig.model_fields:
                raise ConfigError(f"未知模型配置键 {name!r}")
            self.MODEL_OVERRIDES[name] = value
        elif section == "train":
            if name not in TrainConfig.model_fields:
                raise ConfigError(f"未知训练配置键 {name!r}")
            try:
                self.TRAIN = TrainConfig(**{**self.TRAIN.model_dump(), name: value})
            except ValidationError as e:
                raise ConfigError(f"训练配置 {name} 无效: {e}") from e
        elif section == "paths":
            if name not in PATH_KEYS:
                raise ConfigError(f"未知路径键 {name!r}")
            setattr(self, PATH_KEYS[name], Path(value))
        else:
            raise ConfigError(f"未知配置键 {key!r}")

    def resolve_model_config(self, variant: Optional[str] = None) -> ModelConfig:
        """
        展开变体后再应用显式开关；显式开关与变体冲突时以显式为准并记录警告。

        参数:
            variant: 变体名，默认为 self.VARIANT
        """
        variant = variant or self.VARIANT
        flags = expand_variant(variant)
        for key, value in self.MODEL_OVERRIDES.items():
            if key in flags and flags[key] != value:
                logger.warning(f"显式参数 {key}={value!r} 覆盖变体 {variant} 的设置 {flags[key]!r}")
            flags[key] = value
        try:
            return ModelConfig(**flags)
        except ValidationError as e:
            raise ConfigError(f"模型配置无效: {e}") from e

    def resolve_train_config(self) -> TrainConfig:
        return self.TRAIN.model_copy(update={"seed": self.SEED})

    def validate_inputs(self, required: List[str]) -> None:
        """
        确保所需的输入路径已配置且存在（在任何计算之前调用）。

        参数:
            required: 路径键名列表，如 ["train", "test"]
        """
        for key in required:
            path = getattr(self, PATH_KEYS[key])
            if path is None:
                raise ConfigError(f"缺少必需的路径参数 --{key}")
            if not Path(path).exists():
                raise ConfigError(f"输入文件不存在: {path}")

    def ensure_directories(self):
        """确保输出目录与日志目录存在"""
        self.OUTPUT_DIR.mkdir(parents=True, exist_ok=True)
        self.LOG_DIR.mkdir(parents=True, exist_ok=True)

    def snapshot(self, variant: Optional[str] = None) -> Dict[str, Any]:
        """解析后的完整配置（写入 resolved_config.json 以便追溯）"""
        return {
            "seed": self.SEED,
            "variant": variant or self.VARIANT,
            "paths": {
                key: (str(getattr(self, attr)) if getattr(self, attr) is not None else None)
                for key, attr in PATH_KEYS.items()
            },
            "model": self.resolve_model_config(variant).model_dump(),
            "train": self.resolve_train_config().model_dump(),
        }


# 实例化全局配置单例对象，应用程序全局共享
settings = Settings()

# 从 run_config.json 加载配置（会覆盖默认值）
settings.load_from_run_config()
