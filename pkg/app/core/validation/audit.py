"""约束审计：只依据采样得到的轨迹重新计算各类违反量"""

import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

import numpy as np

from app.config import EPS_TIME, SMOOTH_CONDITION_TOL, SMOOTH_EXCEEDANCE_FACTOR, TOLERANCE_PROFILES
from app.core.entities import InputMode, PlannerParams, SurveyPlan
from app.core.errors import InvalidParameterError
from app.core.trajectory.piecewise import PiecewiseTrajectory
from app.core.trajectory.smoothing import QuarticSpline
from app.core.utils.logger import setup_logger
from app.core.validation.oracle import forward_integrate

logger = setup_logger("audit")


@dataclass
class SmoothingAudit:
    endpoint_error: float = 0.0  # 端点位置/速度条件误差
    midpoint_error: float = 0.0  # 段中点位置条件误差
    max_waypoint_speed: float = 0.0
    max_accel: float = 0.0
    accel_ratio: float = 0.0  # max‖r̄″‖ / ū
    exceedance_factor: float = SMOOTH_EXCEEDANCE_FACTOR
    condition_tol: float = SMOOTH_CONDITION_TOL
    speed_bound: Optional[float] = None

    @property
    def exceeds(self) -> bool:
        return self.accel_ratio > self.exceedance_factor

    def failures(self, tolerance: float) -> List[str]:
        failed = []
        if self.endpoint_error > self.condition_tol:
            failed.append("smoothed_endpoint_error")
        if self.midpoint_error > self.condition_tol:
            failed.append("smoothed_midpoint_error")
        if self.speed_bound is not None and self.max_waypoint_speed > self.speed_bound + tolerance:
            failed.append("smoothed_waypoint_speed")
        if self.exceeds:
            failed.append("smoothed_accel_exceedance")
        return failed


@dataclass
class AuditReport:
    profile: str
    tolerance: float
    families: Dict[str, float] = field(default_factory=dict)
    waypoint_errors: List[float] = field(default_factory=list)
    waypoint_speeds: List[float] = field(default_factory=list)
    speed_bound: Optional[float] = None
    offending_waypoints: List[int] = field(default_factory=list)
    total_time: float = 0.0
    baseline_time: Optional[float] = None
    delta_time: Optional[float] = None
    relative_delta: Optional[float] = None
    smoothing: Optional[SmoothingAudit] = None
    passed: bool = False

    @property
    def failures(self) -> List[str]:
        failed = [name for name, value in self.families.items() if value > self.tolerance]
        if self.smoothing is not None:
            failed.extend(self.smoothing.failures(self.tolerance))
        return failed

    def to_json(self) -> dict:
        data = asdict(self)
        data["failures"] = self.failures
        return data


def trajectory_stats(traj: PiecewiseTrajectory, waypoint_times: np.ndarray) -> Dict[str, float]:
    """总时间、航点最大速度、最大输入幅值"""
    speeds = [float(np.linalg.norm(traj.sample(float(t))[1])) for t in waypoint_times]
    moving = (traj.t_end - traj.t_start) > EPS_TIME
    norms = np.linalg.norm(traj.u[moving], axis=1) if np.any(moving) else np.zeros(1)
    return {
        "total_time": traj.duration,
        "max_waypoint_speed": max(speeds) if speeds else 0.0,
        "max_input_norm": float(np.max(norms)),
    }


def _audit_spline(
    spline: QuarticSpline,
    traj: PiecewiseTrajectory,
    params: PlannerParams,
    exceedance_factor: float,
) -> SmoothingAudit:
    bound = params.waypoint_speed_bound
    result = SmoothingAudit(
        exceedance_factor=exceedance_factor,
        speed_bound=bound if math.isfinite(bound) else None,
    )
    times = traj.waypoint_times
    endpoint, midpoint, speeds = 0.0, 0.0, []
    for k in range(len(spline.t_start)):
        delta = spline.durations[k]
        r_a, v_a, _ = spline.evaluate(k, 0.0)
        r_b, v_b, _ = spline.evaluate(k, delta)
        r_ta, v_ta, _ = traj.sample(float(times[k]))
        r_tb, v_tb, _ = traj.sample(float(times[k + 1]))
        endpoint = max(
            endpoint,
            float(np.max(np.abs(r_a - r_ta))),
            float(np.max(np.abs(v_a - v_ta))),
            float(np.max(np.abs(r_b - r_tb))),
            float(np.max(np.abs(v_b - v_tb))),
        )
        if delta >= EPS_TIME:
            r_m, _, _ = spline.evaluate(k, 0.5 * delta)
            r_tm, _, _ = traj.sample(float(times[k] + 0.5 * delta))
            midpoint = max(midpoint, float(np.max(np.abs(r_m - r_tm))))
        speeds.append(float(np.linalg.norm(v_a)))
    speeds.append(float(np.linalg.norm(spline.evaluate(len(spline.t_start) - 1, spline.durations[-1])[1])))
    samples = np.linspace(0.0, spline.duration, 1000) if spline.duration > 0 else np.zeros(1)
    _, _, acc = spline.sample_many(samples)
    max_accel = float(np.max(np.linalg.norm(acc, axis=1)))
    result.endpoint_error = endpoint
    result.midpoint_error = midpoint
    result.max_waypoint_speed = max(speeds)
    result.max_accel = max_accel
    result.accel_ratio = max_accel / params.u_plan
    if result.accel_ratio > 1.0:
        logger.info(f"smoothed acceleration reaches {result.accel_ratio:.3f}·ū")
    return result


def audit(
    traj: PiecewiseTrajectory,
    plan: SurveyPlan,
    params: PlannerParams,
    baseline: Optional[PiecewiseTrajectory] = None,
    spline: Optional[QuarticSpline] = None,
    mode: Optional[InputMode] = None,
    profile: str = "default",
    exceedance_factor: float = SMOOTH_EXCEEDANCE_FACTOR,
) -> AuditReport:
    """
    审计轨迹：航点位置误差、航点速度与模糊上限、单轴速度框、输入幅值、
    区间连续性、RK4 重积分一致性，以及可选的平滑轨迹与基准对比

    参数：
    - mode: 球面等式模式时检查 |‖u‖ − ū|，否则只检查 ‖u‖ ≤ ū
    - profile: 容差档位 default / strict
    """
    if profile not in TOLERANCE_PROFILES:
        raise InvalidParameterError(
            f"unknown tolerance profile {profile!r}, expected one of {sorted(TOLERANCE_PROFILES)}"
        )
    tol = TOLERANCE_PROFILES[profile]
    report = AuditReport(profile=profile, tolerance=tol, total_time=traj.duration)

    # 航点
    errors, speeds = [], []
    for n, t in enumerate(traj.waypoint_times):
        r, v, _ = traj.sample(float(t))
        errors.append(float(np.linalg.norm(r - plan.waypoints[n])))
        speeds.append(float(np.linalg.norm(v)))
    report.waypoint_errors = errors
    report.waypoint_speeds = speeds
    report.families["waypoint_position"] = max(errors)

    bound = params.waypoint_speed_bound
    if math.isfinite(bound):
        report.speed_bound = bound
        excess = np.array(speeds) - bound
        report.offending_waypoints = [int(i) for i in np.flatnonzero(excess > tol)]
        report.families["waypoint_speed"] = float(max(np.max(excess), 0.0))
    else:
        report.families["waypoint_speed"] = 0.0

    # 常加速度区间内速度线性变化，检查区间端点即覆盖整段
    if math.isfinite(params.v_axis_max):
        endpoint_speeds = np.vstack([traj.v_start, traj.v_end])
        report.families["axis_box"] = float(max(np.max(np.abs(endpoint_speeds)) - params.v_axis_max, 0.0))
    else:
        report.families["axis_box"] = 0.0

    moving = (traj.t_end - traj.t_start) > params.eps_time
    norms = np.linalg.norm(traj.u, axis=1)
    if np.any(moving):
        if mode == InputMode.SPHERE_EQUALITY:
            report.families["input_norm"] = float(np.max(np.abs(norms[moving] - params.u_plan)))
        else:
            report.families["input_norm"] = float(max(np.max(norms[moving] - params.u_plan), 0.0))
    else:
        report.families["input_norm"] = 0.0

    if traj.n_intervals > 1:
        jump_r = np.max(np.abs(traj.r_end[:-1] - traj.r_start[1:]))
        jump_v = np.max(np.abs(traj.v_end[:-1] - traj.v_start[1:]))
        report.families["continuity"] = float(max(jump_r, jump_v))
    else:
        report.families["continuity"] = 0.0

    # 逐区间从节点状态重新积分，与区间终点的节点位置比较
    rk4_error = 0.0
    for k in np.flatnonzero(moving):
        history = forward_integrate(
            ([traj.t_end[k] - traj.t_start[k]], traj.u[k : k + 1]),
            (traj.r_start[k], traj.v_start[k]),
        )
        rk4_error = max(rk4_error, float(np.linalg.norm(history.final[0] - traj.r_end[k])))
    report.families["rk4_consistency"] = rk4_error

    if spline is not None:
        report.smoothing = _audit_spline(spline, traj, params, exceedance_factor)

    if baseline is not None:
        report.baseline_time = baseline.duration
        report.delta_time = traj.duration - baseline.duration
        report.relative_delta = (
            report.delta_time / baseline.duration if baseline.duration > 0 else 0.0
        )

    report.passed = not report.failures
    level = logger.info if report.passed else logger.warning
    level(
        f"audit ({profile}): {'pass' if report.passed else 'FAIL ' + ', '.join(report.failures)}; "
        f"T={traj.duration:.6f} s"
    )
    return report
