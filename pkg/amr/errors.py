"""
异常定义

所有模块抛出的可预期错误都继承自 AmrError，命令行入口据此区分
“校验失败”（退出码 2）与意外错误。
"""

from typing import Optional


class AmrError(Exception):
    """项目内所有可预期错误的基类"""


class DimensionError(AmrError, ValueError):
    """张量形状不匹配"""


class DegenerateMaskError(AmrError, ValueError):
    """掩码把某一行（或整个序列）全部屏蔽"""


class CorpusFormatError(AmrError, ValueError):
    """语料文件格式错误，携带出错行号"""

    def __init__(self, message: str, line_no: Optional[int] = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"第 {line_no} 行: {message}"
        super().__init__(message)


class EmbeddingFormatError(CorpusFormatError):
    """GloVe 词向量文件格式错误"""


class ConfigError(AmrError, ValueError):
    """配置校验失败"""


class UnsupportedConfigError(ConfigError):
    """当前模型配置不支持所请求的操作（例如无注意力模型的显著性分析）"""


class CheckpointError(AmrError):
    """检查点文件损坏或与配置不一致"""
