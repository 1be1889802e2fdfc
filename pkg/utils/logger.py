import logging
import sys
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Optional

# 尝试从配置中导入settings，以获取日志目录
# 如果导入失败（比如单独测试这个文件时），则回退到项目根目录下的 logs
try:
    from config import settings
except ImportError:
    settings = None

LOG_FILE_NAME = "amr.log"


def _default_log_dir() -> Path:
    if settings is not None:
        return Path(settings.LOG_DIR)
    return Path(__file__).resolve().parent.parent / "logs"


def setup_logger(name: str = "AMR", log_dir: Optional[Path] = None) -> logging.Logger:
    """
    配置并返回一个具有控制台和文件输出的Logger实例。

    参数:
        name (str): 日志记录器的名称，默认为"AMR"
        log_dir (Path): 日志目录，默认为 settings.LOG_DIR

    返回值:
        logging.Logger: 配置好的Logger对象

    功能说明:
        - 日志会同时输出到控制台和文件
        - 文件使用轮换处理（单个文件最大5MB，保留3个备份）
        - 处理器挂在 "amr" 根记录器上，库模块的 logging.getLogger(__name__) 共用同一输出
        - 重复调用不会重复添加处理器
    """
    log_dir = Path(log_dir) if log_dir is not None else _default_log_dir()
    log_dir.mkdir(parents=True, exist_ok=True)

    logger = logging.getLogger(name)
    logger.setLevel(logging.INFO)

    # 格式：时间 | 日志级别 | 模块名 | 消息
    formatter = logging.Formatter(
        fmt="%(asctime)s | %(levelname)-8s | %(name)-15s | %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S"
    )

    # 防止重复添加Handler（多次调用时）
    if logger.handlers:
        return logger

    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setFormatter(formatter)
    console_handler.setLevel(logging.INFO)

    # 单个日志最大5MB，最多保留3个备份
    file_handler = RotatingFileHandler(
        log_dir / LOG_FILE_NAME,
        maxBytes=5*1024*1024,
        backupCount=3,
        encoding='utf-8'
    )
    file_handler.setFormatter(formatter)
    file_handler.setLevel(logging.INFO)

    # 库模块（amr.*、config）的日志共用同一组处理器
    for target in (logger, logging.getLogger("amr"), logging.getLogger("config")):
        target.setLevel(logging.INFO)
        if not target.handlers:
            target.addHandler(console_handler)
            target.addHandler(file_handler)

    return logger
