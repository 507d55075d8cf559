"""独立的约束检查：只依据解本身重新计算各类约束的最大违反量"""

import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List

import numpy as np

from app.core.entities import InputMode, NodeSolution, PlannerParams, SurveyPlan


@dataclass
class ResidualReport:
    dynamics: float = 0.0  # m 或 m/s
    waypoint_position: float = 0.0  # m
    blur_cone: float = 0.0  # m/s
    sphere: float = 0.0  # m/s^2
    axis_box: float = 0.0  # m/s
    u_z_min: float = 0.0  # m/s^2
    negative_dt: float = 0.0  # s
    boundary_velocity: float = 0.0  # m/s
    dynamics_per_interval: List[float] = field(default_factory=list)
    worst_waypoint: int = -1
    worst_blur_waypoint: int = -1

    @property
    def families(self) -> Dict[str, float]:
        return {
            "dynamics": self.dynamics,
            "waypoint_position": self.waypoint_position,
            "blur_cone": self.blur_cone,
            "sphere": self.sphere,
            "axis_box": self.axis_box,
            "u_z_min": self.u_z_min,
            "negative_dt": self.negative_dt,
            "boundary_velocity": self.boundary_velocity,
        }

    @property
    def max_violation(self) -> float:
        return max(self.families.values())

    def violated(self, tol: float) -> List[str]:
        return [name for name, value in self.families.items() if value > tol]

    def passes(self, tol: float) -> bool:
        return not self.violated(tol)

    def to_json(self) -> dict:
        data = asdict(self)
        data["max_violation"] = self.max_violation
        return data


def evaluate_residuals(
    sol: NodeSolution, plan: SurveyPlan, params: PlannerParams
) -> ResidualReport:
    """
    计算动力学残差、航点位置误差、模糊速度锥、球面约束、单轴速度框等的最大违反量

    模糊速度约束只在航点节点检查，切换点节点不受其约束。
    """
    S = sol.switching_points
    K = sol.n_intervals
    if K != (S + 1) * (plan.n_waypoints - 1) or len(sol.v) != K + 1 or len(sol.r) != K + 1:
        # 维度不一致
        inf = math.inf
        return ResidualReport(inf, inf, inf, inf, inf, inf, inf, inf)

    report = ResidualReport()
    dt = np.asarray(sol.dt, dtype=float)
    dt_col = dt[:, None]
    e_r = sol.r[1:] - sol.r[:-1] - sol.v[:-1] * dt_col - 0.5 * sol.u * dt_col**2
    e_v = sol.v[1:] - sol.v[:-1] - sol.u * dt_col
    per_interval = np.maximum(
        np.max(np.abs(e_r), axis=1), np.max(np.abs(e_v), axis=1)
    )
    report.dynamics_per_interval = per_interval.tolist()
    report.dynamics = float(np.max(per_interval, initial=0.0))

    wp_nodes = np.arange(plan.n_waypoints) * (S + 1)
    position_errors = np.linalg.norm(sol.r[wp_nodes] - plan.waypoints, axis=1)
    report.waypoint_position = float(np.max(position_errors))
    report.worst_waypoint = int(np.argmax(position_errors))

    bound = params.waypoint_speed_bound
    if math.isfinite(bound):
        speeds = np.linalg.norm(sol.v[wp_nodes], axis=1)
        excess = speeds - bound
        report.blur_cone = float(max(np.max(excess), 0.0))
        report.worst_blur_waypoint = int(np.argmax(excess))

    norms = np.linalg.norm(sol.u, axis=1)
    moving = dt > params.eps_time
    if np.any(moving):
        if sol.mode == InputMode.SPHERE_EQUALITY:
            report.sphere = float(np.max(np.abs(norms[moving] - params.u_plan)))
        else:
            report.sphere = float(max(np.max(norms[moving] - params.u_plan), 0.0))
        if params.u_z_min is not None:
            report.u_z_min = float(max(np.max(params.u_z_min - sol.u[moving, 2]), 0.0))

    if math.isfinite(params.v_axis_max):
        report.axis_box = float(max(np.max(np.abs(sol.v)) - params.v_axis_max, 0.0))
    report.negative_dt = float(max(-np.min(dt, initial=0.0), 0.0))

    boundary = 0.0
    if params.v_start is not None:
        boundary = max(boundary, float(np.max(np.abs(sol.v[0] - np.asarray(params.v_start)))))
    if params.v_end is not None:
        boundary = max(boundary, float(np.max(np.abs(sol.v[-1] - np.asarray(params.v_end)))))
    report.boundary_velocity = boundary
    return report
