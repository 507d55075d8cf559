"""独立校验工具：RK4 前向积分、一维解析最短时间、小规模网格穷举"""

import itertools
import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from app.config import BRUTE_FORCE_GRID, RK4_STEP_S
from app.core.entities import PlannerParams, SurveyPlan
from app.core.errors import InvalidParameterError
from app.core.utils.logger import setup_logger

logger = setup_logger("validation_oracle")

InputSchedule = Union[Tuple[np.ndarray, np.ndarray], Callable[[float], np.ndarray]]

T_SCAN_POINTS = 200
BISECTION_STEPS = 50
CHUNK_SIZE = 4096


@dataclass
class StateHistory:
    t: np.ndarray  # (M,)
    r: np.ndarray  # (M, 3)
    v: np.ndarray  # (M, 3)

    @property
    def final(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.r[-1], self.v[-1]

    def position_at(self, t: float) -> np.ndarray:
        return np.array([np.interp(t, self.t, self.r[:, i]) for i in range(3)])


def _rk4_step(t, r, v, h, u_of_t):
    # ṙ = v, v̇ = u(t)
    u1 = u_of_t(t)
    u2 = u_of_t(t + 0.5 * h)
    u4 = u_of_t(t + h)
    k1r, k1v = v, u1
    k2r, k2v = v + 0.5 * h * k1v, u2
    k3r, k3v = v + 0.5 * h * k2v, u2
    k4r, k4v = v + h * k3v, u4
    r_next = r + h / 6.0 * (k1r + 2.0 * k2r + 2.0 * k3r + k4r)
    v_next = v + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    return r_next, v_next


def forward_integrate(
    u_schedule: InputSchedule,
    x0: Tuple[Sequence[float], Sequence[float]],
    step_s: float = RK4_STEP_S,
    duration: Optional[float] = None,
) -> StateHistory:
    """
    RK4 积分 ṙ = v, v̇ = u(t)

    参数：
    - u_schedule: 逐区间 (dt, u) 的分段常值输入，或函数 u(t)
    - x0: 初始状态 (r0, v0)
    - step_s: 步长；分段输入时每个区间取不超过 step_s 的等分步长
    - duration: 函数输入时的积分时长
    """
    if not step_s > 0:
        raise InvalidParameterError(f"step_s must be > 0, got {step_s}")
    r = np.asarray(x0[0], dtype=float).copy()
    v = np.asarray(x0[1], dtype=float).copy()
    times, rs, vs = [0.0], [r.copy()], [v.copy()]

    if callable(u_schedule):
        if duration is None:
            raise InvalidParameterError("duration is required for a callable input")
        steps = max(int(math.ceil(duration / step_s - 1e-12)), 1)
        h = duration / steps
        u_of_t = lambda t: np.asarray(u_schedule(t), dtype=float)  # noqa: E731
        t = 0.0
        for i in range(steps):
            r, v = _rk4_step(t, r, v, h, u_of_t)
            t = (i + 1) * h
            times.append(t)
            rs.append(r)
            vs.append(v)
    else:
        dt, u = u_schedule
        dt = np.asarray(dt, dtype=float)
        u = np.asarray(u, dtype=float).reshape(-1, 3)
        t0 = 0.0
        for k in range(len(dt)):
            if dt[k] <= 0:
                continue
            steps = max(int(math.ceil(dt[k] / step_s - 1e-12)), 1)
            h = dt[k] / steps
            u_k = u[k]
            for i in range(steps):
                r, v = _rk4_step(0.0, r, v, h, lambda _t: u_k)
                times.append(t0 + (i + 1) * h)
                rs.append(r)
                vs.append(v)
            t0 += dt[k]
    return StateHistory(t=np.array(times), r=np.array(rs), v=np.array(vs))


def analytic_min_time_1d(d: float, u_max: float, v_cap: float = math.inf) -> float:
    """一维静止到静止的最短时间（带速度上限）"""
    d = abs(d)
    if d == 0:
        return 0.0
    if math.sqrt(d * u_max) <= v_cap:
        return 2.0 * math.sqrt(d / u_max)
    return 2.0 * v_cap / u_max + (d - v_cap**2 / u_max) / v_cap


# ---------- 网格穷举 ----------


@dataclass
class BruteForceResult:
    time_s: float
    grid_cell_s: float
    feasible: bool
    waypoint_velocities: Optional[np.ndarray] = None
    switch_fractions: Optional[np.ndarray] = None


def _segment_feasible(T, f, dp, v0, v1, params: PlannerParams) -> np.ndarray:
    """给定总时长 T 与切换比例 f，两段常值输入的闭式解是否满足约束（逐候选）"""
    g = 1.0 - f
    T_col, f_col, g_col = T[:, None], f[:, None], g[:, None]
    a = v1 - v0
    with np.errstate(divide="ignore", invalid="ignore"):
        u1 = (2.0 * (dp - v0 * T_col) - a * g_col * T_col) / (f_col * T_col**2)
        u2 = (a / T_col - u1 * f_col) / g_col
    u_bar = params.u_plan * (1.0 + 1e-12)
    ok = np.linalg.norm(u1, axis=1) <= u_bar
    ok &= np.linalg.norm(u2, axis=1) <= u_bar
    if math.isfinite(params.v_axis_max):
        v_switch = v0 + u1 * f_col * T_col
        ok &= np.max(np.abs(v_switch), axis=1) <= params.v_axis_max * (1.0 + 1e-12)
    if params.u_z_min is not None:
        ok &= (u1[:, 2] >= params.u_z_min) & (u2[:, 2] >= params.u_z_min)
    return ok & np.isfinite(u1).all(axis=1) & np.isfinite(u2).all(axis=1)


def _segment_min_times(dp, v0, v1, f, params: PlannerParams) -> np.ndarray:
    """每个候选 (v0, v1, f) 的最小可行时长，不可行为 inf"""
    count = len(f)
    if not np.any(dp) and not np.any(v0) and not np.any(v1):
        return np.zeros(count)
    u_bar = params.u_plan
    d = float(np.linalg.norm(dp))
    speeds = np.linalg.norm(v0, axis=1) + np.linalg.norm(v1, axis=1)
    cruise = 2.0 * d / params.v_axis_max if math.isfinite(params.v_axis_max) else 0.0
    t_upper = 2.0 * (2.0 * math.sqrt(d / u_bar) + speeds / u_bar) + cruise
    t_upper = np.maximum(t_upper, 1e-6)

    scan = np.linspace(1.0 / T_SCAN_POINTS, 1.0, T_SCAN_POINTS)
    grid_T = t_upper[:, None] * scan[None, :]
    flat_T = grid_T.reshape(-1)
    repeat = lambda arr: np.repeat(arr, T_SCAN_POINTS, axis=0)  # noqa: E731
    feasible = _segment_feasible(flat_T, repeat(f), dp, repeat(v0), repeat(v1), params).reshape(count, T_SCAN_POINTS)

    found = feasible.any(axis=1)
    first = np.argmax(feasible, axis=1)
    hi = grid_T[np.arange(count), first]
    lo = np.where(first > 0, grid_T[np.arange(count), np.maximum(first - 1, 0)], 0.0)
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        ok = _segment_feasible(mid, f, dp, v0, v1, params)
        hi = np.where(ok, mid, hi)
        lo = np.where(ok, lo, mid)
    return np.where(found, hi, np.inf)


def brute_force_min_time(
    plan: SurveyPlan,
    params: PlannerParams,
    grid_resolution: int = BRUTE_FORCE_GRID,
    fraction_resolution: int = BRUTE_FORCE_GRID,
    max_workers: int = 4,
) -> BruteForceResult:
    """
    N ≤ 3、S=1 的网格穷举：中间航点速度 × 每段切换比例

    每个候选用两段常值输入的两点边值闭式解检验可行性，
    对时长先粗扫再二分。grid_cell_s 为最优候选与相邻网格点的最大时间差。
    """
    N = plan.n_waypoints
    if N > 3:
        raise InvalidParameterError(f"brute force supports at most 3 waypoints, got {N}")
    if params.switching_points != 1:
        raise InvalidParameterError("brute force searches one switching point per segment")
    if params.v_start is None or params.v_end is None:
        raise InvalidParameterError("brute force needs fixed boundary velocities")

    if np.all(plan.segment_lengths == 0) and not np.any(params.v_start) and not np.any(params.v_end):
        return BruteForceResult(time_s=0.0, grid_cell_s=0.0, feasible=True)

    fractions = np.linspace(0.0, 1.0, fraction_resolution + 2)[1:-1]
    v_start = np.asarray(params.v_start, dtype=float)
    v_end = np.asarray(params.v_end, dtype=float)

    if N == 2:
        candidates = np.zeros((1, 3))
    else:
        if math.isfinite(params.v_axis_max):
            v_lim = params.v_axis_max
        else:
            v_lim = math.sqrt(params.u_plan * float(np.sum(plan.segment_lengths))) + float(
                max(np.max(np.abs(v_start)), np.max(np.abs(v_end)))
            )
        axis = np.linspace(-v_lim, v_lim, grid_resolution)
        grid_index = np.array(list(itertools.product(range(grid_resolution), repeat=3)))
        candidates = axis[grid_index]
        bound = params.waypoint_speed_bound
        if math.isfinite(bound):
            inside = np.linalg.norm(candidates, axis=1) <= bound * (1.0 + 1e-12)
            candidates, grid_index = candidates[inside], grid_index[inside]

    def segment_table(n: int) -> np.ndarray:
        """返回 (候选数, 切换比例数) 的最小时长表"""
        dp = plan.waypoints[n + 1] - plan.waypoints[n]
        count = len(candidates)
        if N == 2:
            v0 = np.repeat(v_start[None, :], count, axis=0)
            v1 = np.repeat(v_end[None, :], count, axis=0)
        elif n == 0:
            v0 = np.repeat(v_start[None, :], count, axis=0)
            v1 = candidates
        else:
            v0 = candidates
            v1 = np.repeat(v_end[None, :], count, axis=0)
        pairs_v0 = np.repeat(v0, len(fractions), axis=0)
        pairs_v1 = np.repeat(v1, len(fractions), axis=0)
        pairs_f = np.tile(fractions, count)
        table = np.empty(len(pairs_f))
        chunks = range(0, len(pairs_f), CHUNK_SIZE)
        with ThreadPoolExecutor(max_workers=max_workers) as executor:
            futures = {
                executor.submit(
                    _segment_min_times,
                    dp,
                    pairs_v0[start : start + CHUNK_SIZE],
                    pairs_v1[start : start + CHUNK_SIZE],
                    pairs_f[start : start + CHUNK_SIZE],
                    params,
                ): start
                for start in chunks
            }
            for future in as_completed(futures):
                start = futures[future]
                result = future.result()
                table[start : start + len(result)] = result
        return table.reshape(count, len(fractions))

    tables = [segment_table(n) for n in range(N - 1)]
    best_per_segment = [table.min(axis=1) for table in tables]
    totals = np.sum(best_per_segment, axis=0)
    if not np.any(np.isfinite(totals)):
        logger.warning("brute force: no feasible grid point at this resolution")
        return BruteForceResult(time_s=math.inf, grid_cell_s=math.inf, feasible=False)

    best = int(np.argmin(totals))
    best_time = float(totals[best])
    best_fractions = np.array([fractions[int(np.argmin(table[best]))] for table in tables])

    # 相邻网格点：切换比例 ±1，以及中间航点速度每个分量 ±1
    neighbours = []
    for table in tables:
        j = int(np.argmin(table[best]))
        for step in (-1, 1):
            if 0 <= j + step < len(fractions):
                neighbours.append(abs(table[best, j + step] - table[best, j]))
    if N == 3:
        rows = {tuple(index): row for row, index in enumerate(grid_index.tolist())}
        for axis_index in range(3):
            for step in (-1, 1):
                target = grid_index[best].copy()
                target[axis_index] += step
                row = rows.get(tuple(target.tolist()))
                if row is not None:
                    neighbours.append(abs(totals[row] - best_time))
    finite = [value for value in neighbours if math.isfinite(value)]
    grid_cell = max(finite) if finite else 0.0

    logger.info(f"brute force optimum {best_time:.6f} s (grid cell {grid_cell:.4f} s)")
    return BruteForceResult(
        time_s=best_time,
        grid_cell_s=grid_cell,
        feasible=True,
        waypoint_velocities=candidates[best] if N == 3 else None,
        switch_fractions=best_fractions,
    )
