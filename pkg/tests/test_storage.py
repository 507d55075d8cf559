from datetime import datetime, timedelta

import numpy as np
import pytest

from app.core.entities import NodeSolution, PlannerParams
from app.core.nlp.planner import plan_trajectory
from app.core.storage import CacheManager, SolutionCache, SolutionStage


@pytest.fixture
def cache(tmp_path):
    manager = CacheManager(str(tmp_path / "cache"))
    yield manager
    manager.close()


class TestCacheManager:
    def test_round_trip(self, cache, bang_plan, bang_params, bang_solution):
        assert cache.get_solution(bang_plan, bang_params, SolutionStage.NLP) is None
        cache.set_solution(bang_plan, bang_params, SolutionStage.NLP, bang_solution.to_json())
        payload = cache.get_solution(bang_plan, bang_params, "nlp")
        restored = NodeSolution.from_json(payload)
        np.testing.assert_array_equal(restored.dt, bang_solution.dt)
        np.testing.assert_array_equal(restored.u, bang_solution.u)
        assert restored.mode == bang_solution.mode
        assert cache.count() == 1

    def test_upsert(self, cache, bang_plan, bang_params, bang_solution):
        cache.set_solution(bang_plan, bang_params, "nlp", bang_solution.to_json())
        updated = bang_solution.to_json()
        updated["total_time_s"] = 3.0
        cache.set_solution(bang_plan, bang_params, "nlp", updated)
        assert cache.count() == 1
        assert cache.get_solution(bang_plan, bang_params, "nlp")["total_time_s"] == 3.0

    def test_stages_are_separate(self, cache, bang_plan, bang_params, bang_solution):
        cache.set_solution(bang_plan, bang_params, "nlp", bang_solution.to_json())
        assert cache.get_solution(bang_plan, bang_params, "socp") is None

    def test_key_depends_on_params(self, cache, bang_plan, bang_params, bang_solution):
        cache.set_solution(bang_plan, bang_params, "nlp", bang_solution.to_json())
        other = PlannerParams(u_max=11.0, v_axis_max=bang_params.v_axis_max)
        assert cache.get_solution(bang_plan, other, "nlp") is None
        assert cache.get_solution(bang_plan.translated([1.0, 0.0, 0.0]), bang_params, "nlp") is None

    def test_invalid_stage(self, cache, bang_plan, bang_params, bang_solution):
        with pytest.raises(ValueError):
            cache.set_solution(bang_plan, bang_params, "baseline", bang_solution.to_json())
        with pytest.raises(ValueError):
            cache.set_solution(bang_plan, bang_params, "nlp", {})

    def test_cleanup_old_cache(self, cache, bang_plan, bang_params, bang_solution):
        cache.set_solution(bang_plan, bang_params, "nlp", bang_solution.to_json())
        cache.set_solution(bang_plan, bang_params, "socp", {"dt": 1.0, "u": []})
        with cache.db_manager.get_session(write=True) as session:
            row = session.query(SolutionCache).filter_by(stage="nlp").first()
            row.created_at = datetime.utcnow() - timedelta(days=60)
        assert cache.cleanup_old_cache() == 1
        assert cache.count() == 1

    def test_requires_path(self):
        with pytest.raises(ValueError):
            CacheManager("")


def test_planner_reuses_cached_solution(cache, bang_plan, bang_params):
    first = plan_trajectory(bang_plan, bang_params, cache=cache)
    assert cache.get_solution(bang_plan, bang_params, "nlp") is not None
    assert cache.get_solution(bang_plan, bang_params, "socp") is not None
    second = plan_trajectory(bang_plan, bang_params, cache=cache)
    np.testing.assert_array_equal(second.dt, first.dt)
    np.testing.assert_array_equal(second.u, first.u)
    np.testing.assert_array_equal(second.r, first.r)


def test_managers_share_one_database(tmp_path, bang_plan, bang_params, bang_solution):
    first = CacheManager(str(tmp_path / "cache"))
    second = CacheManager(str(tmp_path / "cache"))
    try:
        first.set_solution(bang_plan, bang_params, "nlp", bang_solution.to_json())
        assert second.get_solution(bang_plan, bang_params, "nlp") is not None
        first.close()
        assert second.count() == 1
        assert first.count() == 1
    finally:
        first.close()
        second.close()
