# app/core/storage/constants.py
from enum import Enum
from datetime import timedelta


class SolutionStage(Enum):
    SOCP = "socp"  # dt 线搜索得到的热启动
    NLP = "nlp"  # 最终节点解


# 缓存配置
CACHE_CONFIG = {
    "max_age": timedelta(days=30),  # 启动时清理早于此时长的记录
    "db_filename": "solutions.db",
}
