# app/core/storage/cache_manager.py
import hashlib
import json
from datetime import datetime
from typing import Any, Dict, Optional, Union

from app.core.entities import PlannerParams, SurveyPlan
from app.core.utils.logger import setup_logger

from .constants import CACHE_CONFIG, SolutionStage
from .database import DatabaseManager
from .models import SolutionCache

logger = setup_logger("cache_manager")


class BaseManager:
    """基础管理器类，提供通用的数据库操作和错误处理"""

    def __init__(self, db_manager: DatabaseManager):
        self.db_manager = db_manager
        self.logger = logger

    def _handle_db_error(self, operation: str, error: Exception) -> None:
        """统一处理数据库错误"""
        error_msg = f"Error during {operation}: {str(error)}"
        self.logger.error(error_msg)
        raise type(error)(error_msg) from error

    @staticmethod
    def _generate_hash(plan: SurveyPlan, params: PlannerParams) -> str:
        """航点与参数规范化 JSON 的 MD5"""
        content = {"plan": plan.to_json(), "params": params.to_json()}
        combined = json.dumps(content, sort_keys=True, separators=(",", ":"))
        return hashlib.md5(combined.encode()).hexdigest()

    @staticmethod
    def _validate_stage(stage: Union[str, SolutionStage]) -> str:
        valid = [s.value for s in SolutionStage]
        value = stage.value if isinstance(stage, SolutionStage) else stage
        if value not in valid:
            raise ValueError(f"Invalid solution stage. Must be one of: {valid}")
        return value


class CacheManager(BaseManager):
    """求解结果缓存，键为 (plan, params) 内容哈希 + 阶段"""

    def __init__(self, app_data_path: str):
        if not app_data_path:
            raise ValueError("app_data_path cannot be empty")
        super().__init__(DatabaseManager(str(app_data_path)))

    def cleanup_old_cache(self) -> int:
        """清理过期缓存，返回删除条数"""
        cleanup_date = datetime.utcnow() - CACHE_CONFIG["max_age"]
        try:
            with self.db_manager.get_session(write=True) as session:
                removed = (
                    session.query(SolutionCache)
                    .filter(SolutionCache.created_at < cleanup_date)
                    .delete()
                )
            self.logger.info(f"Cleaned up {removed} old cache entries")
            return removed
        except Exception as e:
            self._handle_db_error("cleanup_old_cache", e)

    def get_solution(
        self, plan: SurveyPlan, params: PlannerParams, stage: Union[str, SolutionStage]
    ) -> Optional[Dict[str, Any]]:
        """读取缓存；读取失败视为未命中"""
        stage = self._validate_stage(stage)
        hash_key = self._generate_hash(plan, params)
        try:
            with self.db_manager.get_session() as session:
                row = (
                    session.query(SolutionCache)
                    .filter_by(content_hash=hash_key, stage=stage)
                    .first()
                )
                return dict(row.payload) if row else None
        except Exception as e:
            self.logger.error(f"Error getting solution cache: {str(e)}")
            return None

    def set_solution(
        self,
        plan: SurveyPlan,
        params: PlannerParams,
        stage: Union[str, SolutionStage],
        payload: Dict[str, Any],
    ):
        """写入缓存，已存在时覆盖"""
        if not payload:
            raise ValueError("payload cannot be empty")
        stage = self._validate_stage(stage)
        hash_key = self._generate_hash(plan, params)
        total_time = payload.get("total_time_s")
        if total_time is None and "dt" in payload:
            dt = payload["dt"]
            total_time = float(sum(dt)) if isinstance(dt, list) else None
        try:
            with self.db_manager.get_session(write=True) as session:
                row = (
                    session.query(SolutionCache)
                    .filter_by(content_hash=hash_key, stage=stage)
                    .first()
                )
                if row is None:
                    row = SolutionCache(content_hash=hash_key, stage=stage)
                    session.add(row)
                row.n_waypoints = plan.n_waypoints
                row.total_time = total_time
                row.payload = payload
                row.created_at = datetime.utcnow()
        except Exception as e:
            self.logger.error(f"Error setting solution cache: {str(e)}")
            raise

    def count(self) -> int:
        with self.db_manager.get_session() as session:
            return session.query(SolutionCache).count()

    def close(self):
        self.db_manager.close()
