"""
对比基准：输入限制在推力超立方体顶点/面上的 bang-singular-bang 轨迹

每个坐标轴独立求最短时间，较快的轴以相同时长重新求解（降低巡航速度），
所有航点处速度为零。
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.core.entities import PlannerParams, SurveyPlan
from app.core.errors import InfeasibleAxisError, InvalidParameterError
from app.core.trajectory.piecewise import PiecewiseTrajectory
from app.core.utils.logger import setup_logger

logger = setup_logger("baseline_bang")

TIME_TOL = 1e-12

Phase = Tuple[int, float]  # (加速度符号 −1/0/+1, 时长 s)


@dataclass
class AxisSchedule:
    phases: List[Phase] = field(default_factory=list)
    u_axis: float = 0.0
    dwell_inserted: bool = False

    @property
    def duration(self) -> float:
        return float(sum(duration for _, duration in self.phases))

    @property
    def switch_count(self) -> int:
        return max(len(self.phases) - 1, 0)

    def input_at(self, t: float) -> float:
        """段内时刻 t 的加速度（左区间优先）"""
        elapsed = 0.0
        for sign, duration in self.phases:
            elapsed += duration
            if t <= elapsed:
                return sign * self.u_axis
        return self.phases[-1][0] * self.u_axis if self.phases else 0.0

    def breakpoints(self) -> np.ndarray:
        return np.cumsum([duration for _, duration in self.phases])


@dataclass
class BangSchedule:
    """一个航段的三轴同步时间表"""

    axes: List[AxisSchedule]
    duration: float
    start: np.ndarray
    end: np.ndarray

    @property
    def dwell_inserted(self) -> bool:
        return any(axis.dwell_inserted for axis in self.axes)

    def intervals(self) -> Tuple[np.ndarray, np.ndarray]:
        """合并各轴切换时刻，返回逐区间 (dt, u)"""
        cuts = [0.0, self.duration]
        for axis in self.axes:
            cuts.extend(t for t in axis.breakpoints() if 0.0 < t < self.duration)
        cuts = np.unique(np.array(cuts))
        dt = np.diff(cuts)
        keep = dt > TIME_TOL
        mids = 0.5 * (cuts[:-1] + cuts[1:])
        u = np.array([[axis.input_at(t) for axis in self.axes] for t in mids]).reshape(-1, 3)
        return dt[keep], u[keep]


def _drop_empty(phases: Sequence[Phase]) -> List[Phase]:
    return [(sign, duration) for sign, duration in phases if duration > TIME_TOL]


def plan_axis_min_time(
    d: float, v0: float, vf: float, u_axis: float, v_cap: float = math.inf
) -> AxisSchedule:
    """
    单轴双积分器最短时间：加速到 min(峰值, v_cap)，可选巡航，再减速

    参数：
    - d: 位移 m
    - v0, vf: 初末速度 m/s
    - u_axis: 单轴加速度上限 m/s^2
    - v_cap: 单轴速度上限 m/s
    """
    if not u_axis > 0:
        raise InvalidParameterError(f"u_axis must be > 0, got {u_axis}")
    if abs(v0) > v_cap or abs(vf) > v_cap:
        raise InfeasibleAxisError(
            f"boundary velocities ({v0}, {vf}) exceed the axis cap {v_cap}"
        )

    best: Optional[List[Phase]] = None
    best_time = math.inf
    for s in (1, -1):
        X = s * u_axis * d + 0.5 * (v0**2 + vf**2)
        if X < 0:
            continue
        for peak in (math.sqrt(X), -math.sqrt(X)):
            t1 = s * (peak - v0) / u_axis
            t2 = s * (peak - vf) / u_axis
            if t1 < -TIME_TOL or t2 < -TIME_TOL:
                continue
            if abs(peak) > v_cap:
                v_c = math.copysign(v_cap, peak)
                t1 = s * (v_c - v0) / u_axis
                t2 = s * (v_c - vf) / u_axis
                ramps = s * ((v_c**2 - v0**2) + (v_c**2 - vf**2)) / (2.0 * u_axis)
                t_c = (d - ramps) / v_c
                if min(t1, t2, t_c) < -TIME_TOL:
                    continue
                phases = [(s, max(t1, 0.0)), (0, max(t_c, 0.0)), (-s, max(t2, 0.0))]
            else:
                phases = [(s, max(t1, 0.0)), (-s, max(t2, 0.0))]
            total = sum(duration for _, duration in phases)
            if total < best_time:
                best, best_time = phases, total

    if best is None:
        raise InfeasibleAxisError(
            f"no bang-bang schedule reaches d={d} from v0={v0} to vf={vf}"
        )
    return AxisSchedule(phases=_drop_empty(best), u_axis=u_axis)


def _fixed_time(
    d: float, v0: float, vf: float, u_axis: float, v_cap: float, T: float
) -> Optional[AxisSchedule]:
    """时长固定为 T 的 bang-coast-bang，找不到时返回 None"""
    candidates = []
    for s1 in (1, -1):
        for s2 in (1, -1):
            a = s2 - s1
            b = 2.0 * u_axis * T + 2.0 * s1 * v0 - 2.0 * s2 * vf
            c = s2 * vf**2 - s1 * v0**2 - 2.0 * u_axis * d
            if a == 0:
                roots = [-c / b] if b != 0 else []
            else:
                disc = b * b - 4.0 * a * c
                if disc < 0:
                    continue
                root = math.sqrt(disc)
                roots = [(-b + root) / (2.0 * a), (-b - root) / (2.0 * a)]
            for v_c in roots:
                t_a = s1 * (v_c - v0) / u_axis
                t_b = s2 * (vf - v_c) / u_axis
                t_c = T - t_a - t_b
                if min(t_a, t_b, t_c) < -1e-9 or abs(v_c) > v_cap + 1e-9:
                    continue
                candidates.append((abs(v_c), [(s1, max(t_a, 0.0)), (0, max(t_c, 0.0)), (s2, max(t_b, 0.0))]))
    if not candidates:
        return None
    candidates.sort(key=lambda item: item[0])
    return AxisSchedule(phases=_drop_empty(candidates[0][1]), u_axis=u_axis)


def plan_axis_fixed_time(
    d: float, v0: float, vf: float, u_axis: float, v_cap: float, T: float
) -> AxisSchedule:
    """把单轴时间表拉伸到时长 T；无法拉伸时在静止端插入零输入停留"""
    schedule = _fixed_time(d, v0, vf, u_axis, v_cap, T)
    if schedule is not None:
        return schedule
    fastest = plan_axis_min_time(d, v0, vf, u_axis, v_cap)
    dwell = T - fastest.duration
    if dwell < -1e-9:
        raise InfeasibleAxisError(f"axis needs {fastest.duration} s but only {T} s available")
    if v0 == 0:
        phases = [(0, max(dwell, 0.0))] + fastest.phases
    elif vf == 0:
        phases = fastest.phases + [(0, max(dwell, 0.0))]
    else:
        raise InfeasibleAxisError(
            f"cannot stretch axis schedule to {T} s with non-zero boundary velocities"
        )
    logger.warning(f"time stretch failed; inserted {dwell:.6f} s zero-input dwell")
    return AxisSchedule(phases=_drop_empty(phases), u_axis=u_axis, dwell_inserted=True)


def plan_segment(
    w_a: Sequence[float],
    w_b: Sequence[float],
    v_a: Sequence[float],
    v_b: Sequence[float],
    params: PlannerParams,
) -> BangSchedule:
    """单航段的三轴同步 bang-singular-bang，单轴加速度 ū·hypercube_scale"""
    w_a, w_b = np.asarray(w_a, dtype=float), np.asarray(w_b, dtype=float)
    v_a, v_b = np.asarray(v_a, dtype=float), np.asarray(v_b, dtype=float)
    u_axis = params.u_axis
    v_cap = params.v_axis_max
    delta = w_b - w_a

    fastest = [plan_axis_min_time(delta[i], v_a[i], v_b[i], u_axis, v_cap) for i in range(3)]
    times = [axis.duration for axis in fastest]
    slowest = int(np.argmax(times))
    T = times[slowest]
    axes = []
    for i in range(3):
        if i == slowest:
            axes.append(fastest[i])
        else:
            axes.append(plan_axis_fixed_time(delta[i], v_a[i], v_b[i], u_axis, v_cap, T))
    return BangSchedule(axes=axes, duration=T, start=w_a, end=w_b)


@dataclass
class BaselinePlan:
    segments: List[BangSchedule]
    waypoints: np.ndarray

    def _intervals(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """拼接各航段的区间，返回 (dt, u, 每个航点对应的区间边界下标)"""
        dts, us, bounds = [], [], [0]
        for segment in self.segments:
            dt, u = segment.intervals()
            if len(dt) == 0:
                dt, u = np.zeros(1), np.zeros((1, 3))
            dts.append(dt)
            us.append(u)
            bounds.append(bounds[-1] + len(dt))
        return np.concatenate(dts), np.vstack(us), np.array(bounds)

    @property
    def waypoint_times(self) -> np.ndarray:
        # 与 to_trajectory 使用同一个累加序列，末时刻与轨迹时长逐位一致
        dt, _, bounds = self._intervals()
        return np.concatenate([[0.0], np.cumsum(dt)])[bounds]

    @property
    def total_time(self) -> float:
        return float(self.waypoint_times[-1])

    @property
    def dwell_inserted(self) -> bool:
        return any(segment.dwell_inserted for segment in self.segments)

    def to_trajectory(self) -> PiecewiseTrajectory:
        dt, u, _ = self._intervals()
        return PiecewiseTrajectory.from_schedule(
            dt,
            u,
            self.waypoints[0],
            np.zeros(3),
            waypoint_times=self.waypoint_times,
        )


def plan_baseline(plan: SurveyPlan, params: PlannerParams) -> BaselinePlan:
    """整条航线的基准轨迹，所有航点速度为零"""
    zero = np.zeros(3)
    segments = [
        plan_segment(plan.waypoints[n], plan.waypoints[n + 1], zero, zero, params)
        for n in range(plan.n_waypoints - 1)
    ]
    baseline = BaselinePlan(segments=segments, waypoints=plan.waypoints.copy())
    logger.info(f"baseline total time {baseline.total_time:.4f} s")
    if baseline.dwell_inserted:
        logger.warning("baseline contains zero-input dwell phases")
    return baseline
