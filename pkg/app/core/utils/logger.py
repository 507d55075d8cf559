"""日志：控制台显示规划进度，文件记录包括求解器迭代在内的完整信息"""

import logging
import logging.handlers
from pathlib import Path
from typing import Optional

from ...config import LOG_FORMAT, LOG_LEVEL, LOG_PATH

# 逐次迭代的求解器日志在控制台只保留 WARNING 及以上
SOLVER_LOGGERS = ("cone_solver", "auglag")
QUIET_LIBRARIES = ("sqlalchemy.engine", "sqlalchemy.pool", "matplotlib")


class LevelFormatter(logging.Formatter):
    """INFO 只输出消息本身，其他级别带时间、来源与级别"""

    def __init__(self, fmt: str = LOG_FORMAT, datefmt: str = "%Y-%m-%d %H:%M:%S"):
        super().__init__(fmt, datefmt=datefmt)
        self._plain = logging.Formatter("%(message)s")

    def format(self, record: logging.LogRecord) -> str:
        if record.levelno == logging.INFO:
            return self._plain.format(record)
        return super().format(record)


def setup_logger(
    name: str,
    level: int = LOG_LEVEL,
    log_file: Optional[str] = str(LOG_PATH / "survey_planner.log"),
    console_output: bool = True,
) -> logging.Logger:
    """
    创建并配置一个日志记录器

    参数：
    - name: 日志记录器的名称，求解器模块见 SOLVER_LOGGERS
    - level: 日志级别
    - log_file: 轮转日志文件路径，为空时不写文件
    - console_output: 是否输出到控制台
    """
    logger = logging.getLogger(name)
    logger.setLevel(level)

    if not logger.handlers:
        formatter = LevelFormatter()
        if console_output:
            console_handler = logging.StreamHandler()
            console_handler.setLevel(max(level, logging.WARNING) if name in SOLVER_LOGGERS else level)
            console_handler.setFormatter(formatter)
            logger.addHandler(console_handler)

        if log_file:
            Path(log_file).parent.mkdir(parents=True, exist_ok=True)
            file_handler = logging.handlers.RotatingFileHandler(
                log_file, maxBytes=10 * 1024 * 1024, backupCount=5, encoding="utf-8"
            )
            file_handler.setLevel(level)
            file_handler.setFormatter(formatter)
            logger.addHandler(file_handler)

    for lib in QUIET_LIBRARIES:
        logging.getLogger(lib).setLevel(logging.ERROR)

    return logger
