import math

import numpy as np
import pytest
import yaml

from app.core.entities import (
    CameraSpec,
    InputMode,
    NodeSolution,
    PlannerParams,
    SurveyPlan,
)

# 实飞任务的相机视场角
TABLE1_CAMERA = CameraSpec(
    fov_h_rad=math.radians(87.0),
    fov_v_rad=math.radians(71.0),
    focal_length_m=0.020,
)

CORNER_WAYPOINTS = [
    [0.0, 0.0, 10.0],
    [30.0, 0.0, 10.0],
    [30.0, 10.0, 10.0],
    [0.0, 10.0, 10.0],
    [0.0, 20.0, 10.0],
    [30.0, 20.0, 10.0],
]


def line_plan(d: float, axis: int = 0) -> SurveyPlan:
    end = np.zeros(3)
    end[axis] = d
    return SurveyPlan(waypoints=np.array([np.zeros(3), end]))


def bang_bang_solution() -> NodeSolution:
    """d=10 m、ū=10 的一维静止到静止解，S=1"""
    return NodeSolution(
        dt=np.array([1.0, 1.0]),
        u=np.array([[10.0, 0.0, 0.0], [-10.0, 0.0, 0.0]]),
        v=np.array([[0.0, 0.0, 0.0], [10.0, 0.0, 0.0], [0.0, 0.0, 0.0]]),
        r=np.array([[0.0, 0.0, 0.0], [5.0, 0.0, 0.0], [10.0, 0.0, 0.0]]),
        mode=InputMode.SPHERE_EQUALITY,
        switching_points=1,
    )


@pytest.fixture
def table1_camera() -> CameraSpec:
    return TABLE1_CAMERA


@pytest.fixture
def corner_plan() -> SurveyPlan:
    return SurveyPlan(waypoints=np.array(CORNER_WAYPOINTS))


@pytest.fixture
def corner_params() -> PlannerParams:
    return PlannerParams(u_max=12.0, v_axis_max=15.0, v_blur=math.inf, switching_points=3)


@pytest.fixture
def bang_plan() -> SurveyPlan:
    return line_plan(10.0)


@pytest.fixture
def bang_params() -> PlannerParams:
    return PlannerParams(u_max=10.0, v_axis_max=math.inf)


@pytest.fixture
def bang_solution() -> NodeSolution:
    return bang_bang_solution()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def make_line_plan():
    return line_plan


@pytest.fixture
def write_spec(tmp_path):
    """把任务字典写成 YAML 文件，返回路径"""

    def write(document: dict, name: str = "survey.yaml"):
        path = tmp_path / name
        path.write_text(yaml.safe_dump(document, sort_keys=False), encoding="utf-8")
        return path

    return write


@pytest.fixture
def line_spec_document(tmp_path) -> dict:
    """d=10 m、ū=10 的一维任务，解析最短时间 2 s"""
    return {
        "roi": {"waypoints": [[0.0, 0.0, 0.0], [10.0, 0.0, 0.0]]},
        "planner": {"u_max_mps2": 10.0},
        "output": {"directory": str(tmp_path / "out"), "sample_rate_hz": 10},
        "mode": {"cache": False},
    }
