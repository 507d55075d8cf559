import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np

from app.config import (
    DT_BRACKET,
    DT_TOL,
    EPS_FEAS,
    EPS_OPT,
    EPS_TIME,
    SWITCHING_POINTS_MAX,
)
from app.core.errors import InvalidParameterError, InvalidPlanError


class SolveStatus(Enum):
    """求解状态"""

    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    MAX_ITER = "max-iter"

    def __str__(self):
        return self.value


class InputMode(Enum):
    """输入约束模式"""

    SPHERE_EQUALITY = "sphere-equality"  # ‖u_k‖ = ū
    RELAXED_INEQUALITY = "relaxed-inequality"  # ‖u_k‖ ≤ ū

    def __str__(self):
        return self.value


class PlannerMethod(Enum):
    """对比用的规划方法"""

    NLP = "nlp"
    BASELINE = "bang-singular-bang"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class CameraSpec:
    """相机光学与快门参数，未提供的字段为 None"""

    allowable_blur_px: Optional[float] = None  # ρ
    ground_resolution_px_per_m: Optional[float] = None  # G_x
    shutter_s: Optional[float] = None  # T_s
    fov_h_rad: Optional[float] = None
    fov_v_rad: Optional[float] = None
    focal_length_m: Optional[float] = None
    sensor_width_m: Optional[float] = None
    image_width_px: Optional[float] = None

    def require(self, *names: str) -> None:
        """检查给定字段均为正数，视场角还需小于 π"""
        for name in names:
            value = getattr(self, name)
            if value is None or not value > 0 or not math.isfinite(value):
                raise InvalidParameterError(f"camera.{name} must be > 0, got {value}")
            if name.startswith("fov_") and value >= math.pi:
                raise InvalidParameterError(
                    f"camera.{name} must be < π rad, got {value}"
                )


@dataclass
class SurveyPlan:
    """有序航点列表"""

    waypoints: np.ndarray  # (N, 3) m
    altitude_m: float = 0.0
    line_spacing_m: float = 0.0
    capture_spacing_m: float = 0.0
    allow_coincident: bool = False

    def __post_init__(self):
        self.waypoints = np.atleast_2d(np.asarray(self.waypoints, dtype=float))
        if self.waypoints.ndim != 2 or self.waypoints.shape[1] != 3:
            raise InvalidPlanError(
                f"waypoints must have shape (N, 3), got {self.waypoints.shape}"
            )
        if len(self.waypoints) < 2:
            raise InvalidPlanError(
                f"a survey plan needs at least 2 waypoints, got {len(self.waypoints)}"
            )
        if not np.all(np.isfinite(self.waypoints)):
            raise InvalidPlanError("waypoints must be finite")
        if not self.allow_coincident:
            gaps = np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1)
            if np.any(gaps == 0.0):
                index = int(np.argmin(gaps))
                raise InvalidPlanError(
                    f"waypoints {index} and {index + 1} coincide; "
                    "set allow_coincident for degenerate plans"
                )

    @property
    def n_waypoints(self) -> int:
        return len(self.waypoints)

    @property
    def segment_lengths(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1)

    def translated(self, offset) -> "SurveyPlan":
        return replace(self, waypoints=self.waypoints + np.asarray(offset, float))

    def to_json(self) -> dict:
        return {
            "altitude_m": self.altitude_m,
            "line_spacing_m": self.line_spacing_m,
            "capture_spacing_m": self.capture_spacing_m,
            "waypoints": self.waypoints.tolist(),
        }


@dataclass(frozen=True)
class PlannerParams:
    """飞行器限制、切换点数量与容差"""

    u_max: float  # ū, m/s^2
    v_axis_max: float  # v̄, m/s
    v_blur: float = math.inf  # m/s
    switching_points: int = 1  # S
    u_z_min: Optional[float] = None  # m/s^2, 净加速度坐标系
    v_start: Optional[Tuple[float, float, float]] = (0.0, 0.0, 0.0)  # None 表示自由
    v_end: Optional[Tuple[float, float, float]] = (0.0, 0.0, 0.0)
    eps_feas: float = EPS_FEAS
    eps_opt: float = EPS_OPT
    eps_time: float = EPS_TIME
    gravity: float = 9.81  # 记录用，离散模型中不单独叠加
    thrust_reserve: float = 0.0  # 预留给扰动抑制的比推力
    hypercube_scale: float = 1.0 / math.sqrt(3.0)  # 基准方法的单轴推力比例
    dt_bracket: Tuple[float, float] = DT_BRACKET
    dt_tol: float = DT_TOL
    max_switching_points: int = SWITCHING_POINTS_MAX

    def __post_init__(self):
        problems = []
        if not self.u_max > 0:
            problems.append(f"u_max must be > 0, got {self.u_max}")
        if not self.v_axis_max > 0:
            problems.append(f"v_axis_max must be > 0, got {self.v_axis_max}")
        if not self.v_blur > 0:
            problems.append(f"v_blur must be > 0, got {self.v_blur}")
        if int(self.switching_points) != self.switching_points or self.switching_points < 1:
            problems.append(
                f"switching_points must be an integer >= 1, got {self.switching_points}"
            )
        if self.thrust_reserve < 0 or self.thrust_reserve >= self.u_max:
            problems.append(
                f"thrust_reserve must lie in [0, u_max), got {self.thrust_reserve}"
            )
        if self.u_z_min is not None and abs(self.u_z_min) > self.u_plan:
            problems.append(f"|u_z_min| must not exceed the planning thrust {self.u_plan}")
        if not 0 < self.hypercube_scale <= 1:
            problems.append(f"hypercube_scale must lie in (0, 1], got {self.hypercube_scale}")
        lo, hi = self.dt_bracket
        if not 0 < lo < hi:
            problems.append(f"dt_bracket must satisfy 0 < lo < hi, got {self.dt_bracket}")
        for name in ("v_start", "v_end"):
            value = getattr(self, name)
            if value is not None:
                value = np.asarray(value, dtype=float)
                if value.shape != (3,):
                    problems.append(f"{name} must have 3 components")
                elif np.any(np.abs(value) > self.v_axis_max):
                    problems.append(f"{name} exceeds the per-axis bound v_axis_max")
        if problems:
            raise InvalidParameterError("; ".join(problems))

    @property
    def u_plan(self) -> float:
        """规划时使用的比推力 ū − 预留量"""
        return self.u_max - self.thrust_reserve

    @property
    def blur_redundant(self) -> bool:
        return self.v_blur > math.sqrt(3.0) * self.v_axis_max

    @property
    def waypoint_speed_bound(self) -> float:
        """航点处生效的速度上限"""
        return math.inf if self.blur_redundant else self.v_blur

    @property
    def u_axis(self) -> float:
        return self.u_plan * self.hypercube_scale

    def with_switching_points(self, switching_points: int) -> "PlannerParams":
        return replace(self, switching_points=switching_points)

    def to_json(self) -> dict:
        def finite(value):
            return value if value is None or math.isfinite(value) else None

        return {
            "u_max": self.u_max,
            "v_axis_max": self.v_axis_max,
            "v_blur": finite(self.v_blur),
            "switching_points": self.switching_points,
            "u_z_min": self.u_z_min,
            "v_start": None if self.v_start is None else list(self.v_start),
            "v_end": None if self.v_end is None else list(self.v_end),
            "eps_feas": self.eps_feas,
            "eps_opt": self.eps_opt,
            "thrust_reserve": self.thrust_reserve,
            "hypercube_scale": self.hypercube_scale,
            "dt_bracket": list(self.dt_bracket),
            "dt_tol": self.dt_tol,
            "max_switching_points": self.max_switching_points,
        }


def node_count(n_waypoints: int, switching_points: int) -> int:
    """节点数 (S+1)(N−1)+1"""
    return (switching_points + 1) * (n_waypoints - 1) + 1


def waypoint_nodes(n_waypoints: int, switching_points: int) -> np.ndarray:
    """航点对应的节点下标（从 0 开始）：j = (S+1)·n"""
    return np.arange(n_waypoints) * (switching_points + 1)


@dataclass(frozen=True)
class ConicSolution:
    """固定步长凸松弛的解"""

    status: SolveStatus
    dt: float
    u: np.ndarray  # (K, 3)
    v: np.ndarray  # (K+1, 3)
    r: np.ndarray  # (K+1, 3)
    sigma: np.ndarray  # (K,)
    objective: float
    switching_points: int
    iterations: int = 0
    primal_residual: float = math.nan
    dual_residual: float = math.nan
    gap: float = math.nan

    @property
    def n_intervals(self) -> int:
        return len(self.u)

    @property
    def total_time(self) -> float:
        return self.dt * self.n_intervals


@dataclass
class SolveReport:
    """非线性规划的迭代与收敛信息"""

    converged: bool = False
    outer_iterations: int = 0
    inner_iterations: int = 0
    max_violation: float = math.inf
    stationarity: float = math.inf
    penalty: float = 0.0
    refined: bool = False
    warm_start_time: float = math.nan
    warm_start_dt: float = math.nan
    fallback_used: bool = False
    message: str = ""
    merit_history: List[List[float]] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "converged": self.converged,
            "outer_iterations": self.outer_iterations,
            "inner_iterations": self.inner_iterations,
            "max_violation": self.max_violation,
            "stationarity": self.stationarity,
            "penalty": self.penalty,
            "refined": self.refined,
            "warm_start_time": self.warm_start_time,
            "warm_start_dt": self.warm_start_dt,
            "fallback_used": self.fallback_used,
            "message": self.message,
        }


@dataclass
class NodeSolution:
    """变步长最短时间问题的解：逐区间输入与时长，逐节点状态"""

    dt: np.ndarray  # (K,) s
    u: np.ndarray  # (K, 3) m/s^2
    v: np.ndarray  # (K+1, 3) m/s
    r: np.ndarray  # (K+1, 3) m
    mode: InputMode
    switching_points: int
    report: SolveReport = field(default_factory=SolveReport)

    @property
    def n_intervals(self) -> int:
        return len(self.dt)

    @property
    def total_time(self) -> float:
        return float(np.sum(self.dt))

    @property
    def n_waypoints(self) -> int:
        return self.n_intervals // (self.switching_points + 1) + 1

    @property
    def waypoint_node_indices(self) -> np.ndarray:
        return waypoint_nodes(self.n_waypoints, self.switching_points)

    @property
    def waypoint_times(self) -> np.ndarray:
        times = np.concatenate([[0.0], np.cumsum(self.dt)])
        return times[self.waypoint_node_indices]

    def to_json(self) -> dict:
        return {
            "mode": str(self.mode),
            "switching_points": self.switching_points,
            "total_time_s": self.total_time,
            "dt": self.dt.tolist(),
            "u": self.u.tolist(),
            "v": self.v.tolist(),
            "r": self.r.tolist(),
            "report": self.report.to_json(),
        }

    @classmethod
    def from_json(cls, data: dict) -> "NodeSolution":
        report = SolveReport(**data.get("report", {}))
        return cls(
            dt=np.asarray(data["dt"], dtype=float).reshape(-1),
            u=np.asarray(data["u"], dtype=float).reshape(-1, 3),
            v=np.asarray(data["v"], dtype=float).reshape(-1, 3),
            r=np.asarray(data["r"], dtype=float).reshape(-1, 3),
            mode=InputMode(data["mode"]),
            switching_points=int(data["switching_points"]),
            report=report,
        )


def conic_solution_to_json(sol: ConicSolution) -> dict:
    return {
        "status": str(sol.status),
        "dt": sol.dt,
        "u": sol.u.tolist(),
        "v": sol.v.tolist(),
        "r": sol.r.tolist(),
        "sigma": sol.sigma.tolist(),
        "objective": sol.objective,
        "switching_points": sol.switching_points,
        "iterations": sol.iterations,
    }


def conic_solution_from_json(data: dict) -> ConicSolution:
    return ConicSolution(
        status=SolveStatus(data["status"]),
        dt=float(data["dt"]),
        u=np.asarray(data["u"], dtype=float).reshape(-1, 3),
        v=np.asarray(data["v"], dtype=float).reshape(-1, 3),
        r=np.asarray(data["r"], dtype=float).reshape(-1, 3),
        sigma=np.asarray(data["sigma"], dtype=float).reshape(-1),
        objective=float(data["objective"]),
        switching_points=int(data["switching_points"]),
        iterations=int(data.get("iterations", 0)),
    )
