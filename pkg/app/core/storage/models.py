# app/core/storage/models.py
from datetime import datetime

from sqlalchemy import JSON, Column, DateTime, Float, Index, Integer, String
from sqlalchemy.orm import declarative_base

Base = declarative_base()


class SolutionCache(Base):
    """求解结果缓存表，按 (航点, 参数) 内容哈希与阶段索引"""

    __tablename__ = "solution_cache"

    id = Column(Integer, primary_key=True)
    content_hash = Column(String(32), nullable=False)
    stage = Column(String(16), nullable=False)
    n_waypoints = Column(Integer, nullable=False)
    total_time = Column(Float)
    payload = Column(JSON, nullable=False)
    created_at = Column(DateTime, default=datetime.utcnow)

    __table_args__ = (
        Index("idx_solution_lookup", content_hash, stage, unique=True),
    )

    def __repr__(self):
        return f"<Solution(id={self.id}, stage={self.stage}, n={self.n_waypoints})>"
