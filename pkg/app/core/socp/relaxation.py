"""固定步长凸松弛：构造二阶锥规划，并对步长 dt 做二分搜索"""

import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from app.config import DT_EXPANSION_MARGIN, LINE_SEARCH_MAX_ITER
from app.core.entities import (
    ConicSolution,
    PlannerParams,
    SolveStatus,
    SurveyPlan,
    node_count,
    waypoint_nodes,
)
from app.core.errors import InvalidPlanError, NoFeasibleStepError
from app.core.socp.cone_solver import ConeDims, ConeSolver
from app.core.utils.logger import setup_logger

logger = setup_logger("socp_relaxation")


@dataclass
class ConicProblem:
    """
    固定步长 dt 的凸松弛问题

    变量依次为：自由节点速度、非航点节点位置、每个区间的 (u_k, σ_k)。
    位置以第一个航点为原点。
    """

    dt: float
    switching_points: int
    n_waypoints: int
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    G: np.ndarray
    h: np.ndarray
    dims: ConeDims
    v_index: List[Optional[np.ndarray]]  # 每个节点速度所在列，固定时为 None
    r_index: List[Optional[np.ndarray]]  # 每个节点位置所在列，航点处为 None
    u_index: np.ndarray  # (K, 3)
    sigma_index: np.ndarray  # (K,)
    fixed_v: Dict[int, np.ndarray]
    fixed_r: Dict[int, np.ndarray]  # 相对原点的航点位置
    origin: np.ndarray

    @property
    def n_nodes(self) -> int:
        return node_count(self.n_waypoints, self.switching_points)

    @property
    def n_intervals(self) -> int:
        return self.n_nodes - 1

    @property
    def n_variables(self) -> int:
        return len(self.c)

    @property
    def waypoint_node_indices(self) -> np.ndarray:
        """航点节点下标（从 1 开始计数）"""
        return waypoint_nodes(self.n_waypoints, self.switching_points) + 1


def build_socp(plan: SurveyPlan, params: PlannerParams, dt: float) -> ConicProblem:
    """构造给定 dt 的二阶锥规划"""
    if plan.n_waypoints < 2:
        raise InvalidPlanError("a conic problem needs at least 2 waypoints")
    if not dt > 0:
        raise InvalidPlanError(f"dt must be > 0, got {dt}")

    S = params.switching_points
    n_nodes = node_count(plan.n_waypoints, S)
    K = n_nodes - 1
    origin = plan.waypoints[0].copy()
    wp_nodes = waypoint_nodes(plan.n_waypoints, S)
    fixed_r = {int(j): plan.waypoints[n] - origin for n, j in enumerate(wp_nodes)}
    fixed_v = {}
    if params.v_start is not None:
        fixed_v[0] = np.asarray(params.v_start, dtype=float)
    if params.v_end is not None:
        fixed_v[n_nodes - 1] = np.asarray(params.v_end, dtype=float)

    # 变量编号
    column = 0
    v_index: List[Optional[np.ndarray]] = []
    for j in range(n_nodes):
        if j in fixed_v:
            v_index.append(None)
        else:
            v_index.append(np.arange(column, column + 3))
            column += 3
    r_index: List[Optional[np.ndarray]] = []
    for j in range(n_nodes):
        if j in fixed_r:
            r_index.append(None)
        else:
            r_index.append(np.arange(column, column + 3))
            column += 3
    u_index = column + np.arange(3 * K).reshape(K, 3)
    column += 3 * K
    sigma_index = column + np.arange(K)
    column += K
    n_var = column

    c = np.zeros(n_var)
    c[sigma_index] = 1.0

    # 动力学等式
    A = np.zeros((6 * K, n_var))
    b = np.zeros(6 * K)

    def add_node_term(rows, index, fixed, coeff):
        if index is None:
            b[rows] -= coeff * fixed
        else:
            A[rows, index] += coeff

    for k in range(K):
        pos_rows = np.arange(6 * k, 6 * k + 3)
        vel_rows = pos_rows + 3
        # r_{k+1} − r_k − v_k·dt − u_k·dt²/2 = 0
        add_node_term(pos_rows, r_index[k + 1], fixed_r.get(k + 1), 1.0)
        add_node_term(pos_rows, r_index[k], fixed_r.get(k), -1.0)
        add_node_term(pos_rows, v_index[k], fixed_v.get(k), -dt)
        A[pos_rows, u_index[k]] = -0.5 * dt**2
        # v_{k+1} − v_k − u_k·dt = 0
        add_node_term(vel_rows, v_index[k + 1], fixed_v.get(k + 1), 1.0)
        add_node_term(vel_rows, v_index[k], fixed_v.get(k), -1.0)
        A[vel_rows, u_index[k]] = -dt

    # 锥约束：先象限部分，再二阶锥
    orthant_rows, orthant_h = [], []
    if math.isfinite(params.v_axis_max):
        for j in range(n_nodes):
            if v_index[j] is None:
                continue
            for axis, col in enumerate(v_index[j]):
                for sign in (1.0, -1.0):
                    row = np.zeros(n_var)
                    row[col] = sign
                    orthant_rows.append(row)
                    orthant_h.append(params.v_axis_max)
    if params.u_z_min is not None:
        for k in range(K):
            row = np.zeros(n_var)
            row[u_index[k, 2]] = -1.0
            orthant_rows.append(row)
            orthant_h.append(-params.u_z_min)

    soc_blocks, soc_h, soc_sizes = [], [], []

    def add_cone(head_col, head_value, tail_cols):
        block = np.zeros((1 + len(tail_cols), n_var))
        if head_col is not None:
            block[0, head_col] = -1.0
        for i, col in enumerate(tail_cols):
            block[1 + i, col] = -1.0
        soc_blocks.append(block)
        rhs = np.zeros(1 + len(tail_cols))
        rhs[0] = head_value
        soc_h.append(rhs)
        soc_sizes.append(1 + len(tail_cols))

    for k in range(K):
        add_cone(sigma_index[k], 0.0, u_index[k])  # ‖u_k‖ ≤ σ_k
        add_cone(None, params.u_plan, u_index[k])  # ‖u_k‖ ≤ ū
    speed_bound = min(params.v_axis_max, params.waypoint_speed_bound)
    if math.isfinite(speed_bound):
        for j in wp_nodes:
            if v_index[j] is not None:
                add_cone(None, speed_bound, v_index[j])

    G = np.vstack(orthant_rows + soc_blocks) if (orthant_rows or soc_blocks) else np.zeros((0, n_var))
    h = np.concatenate([np.asarray(orthant_h, dtype=float)] + soc_h)
    dims = ConeDims(l=len(orthant_rows), q=tuple(soc_sizes))

    return ConicProblem(
        dt=dt,
        switching_points=S,
        n_waypoints=plan.n_waypoints,
        c=c,
        A=A,
        b=b,
        G=G,
        h=h,
        dims=dims,
        v_index=v_index,
        r_index=r_index,
        u_index=u_index,
        sigma_index=sigma_index,
        fixed_v=fixed_v,
        fixed_r=fixed_r,
        origin=origin,
    )


def solve_socp(problem: ConicProblem) -> ConicSolution:
    """求解凸松弛问题，并把变量还原为逐节点、逐区间的数组"""
    result = ConeSolver(
        problem.c, problem.A, problem.b, problem.G, problem.h, problem.dims
    ).solve()
    x = result.x
    n_nodes = problem.n_nodes
    v = np.zeros((n_nodes, 3))
    r = np.zeros((n_nodes, 3))
    for j in range(n_nodes):
        v[j] = problem.fixed_v[j] if problem.v_index[j] is None else x[problem.v_index[j]]
        r[j] = problem.fixed_r[j] if problem.r_index[j] is None else x[problem.r_index[j]]
    logger.debug(
        f"socp dt={problem.dt:.6f}: {result.status} after {result.iterations} iterations "
        f"({result.message})"
    )
    return ConicSolution(
        status=result.status,
        dt=problem.dt,
        u=x[problem.u_index],
        v=v,
        r=r + problem.origin,
        sigma=x[problem.sigma_index],
        objective=result.objective,
        switching_points=problem.switching_points,
        iterations=result.iterations,
        primal_residual=result.primal_residual,
        dual_residual=result.dual_residual,
        gap=result.gap,
    )


def feasible_dt_bound(plan: SurveyPlan, params: PlannerParams) -> float:
    """
    按构造可行的等步长估计

    每个航段 S+1 个区间：首区间加速、末区间减速、中间匀速，航点处静止。
    航段长 L 时需要 L ≤ S·dt·min(ū·dt, v̄)。
    """
    S = params.switching_points
    bound = 0.0
    for length in plan.segment_lengths:
        if length <= 0:
            continue
        bound = max(bound, math.sqrt(length / (S * params.u_plan)))
        if math.isfinite(params.v_axis_max):
            bound = max(bound, length / (S * params.v_axis_max))
    for boundary in (params.v_start, params.v_end):
        if boundary is not None:
            bound += float(np.linalg.norm(boundary)) / params.u_plan
    return bound


def line_search_dt(
    plan: SurveyPlan,
    params: PlannerParams,
    dt_lo: Optional[float] = None,
    dt_hi: Optional[float] = None,
    tol_dt: Optional[float] = None,
    callback: Optional[Callable[[int, str], None]] = None,
) -> Tuple[float, ConicSolution]:
    """
    二分搜索最小可行步长 dt*

    可行性关于 dt 单调，只有 status=optimal 视为可行。
    未显式给出 dt_hi 时，上界不可行就按倍数扩大，直到 feasible_dt_bound 的两倍。
    返回 (dt*, 对应的解)。
    """
    expand = dt_hi is None
    lo = params.dt_bracket[0] if dt_lo is None else dt_lo
    hi = params.dt_bracket[1] if dt_hi is None else dt_hi
    tol = params.dt_tol if tol_dt is None else tol_dt
    if not 0 < lo < hi:
        raise InvalidPlanError(f"dt bracket must satisfy 0 < lo < hi, got ({lo}, {hi})")

    def attempt(dt: float) -> ConicSolution:
        return solve_socp(build_socp(plan, params, dt))

    best = attempt(hi)
    lo_infeasible = False
    if best.status != SolveStatus.OPTIMAL and expand:
        cap = max(hi, DT_EXPANSION_MARGIN * feasible_dt_bound(plan, params))
        while best.status != SolveStatus.OPTIMAL and hi < cap:
            lo, lo_infeasible = hi, True
            hi = min(2.0 * hi, cap)
            logger.info(f"relaxation infeasible at dt={lo:.4g} s, trying dt={hi:.4g} s")
            best = attempt(hi)
    if best.status != SolveStatus.OPTIMAL:
        raise NoFeasibleStepError(
            f"relaxation infeasible at dt={hi:.4g} s ({best.status}); "
            "increase the upper dt bound or the number of switching points"
        )
    if not lo_infeasible:
        low_solution = attempt(lo)
        if low_solution.status == SolveStatus.OPTIMAL:
            logger.debug(f"lower dt bound {lo} already feasible")
            return lo, low_solution

    iteration = 0
    while hi - lo > tol and iteration < LINE_SEARCH_MAX_ITER:
        iteration += 1
        mid = 0.5 * (lo + hi)
        solution = attempt(mid)
        if solution.status == SolveStatus.OPTIMAL:
            hi, best = mid, solution
        else:
            lo = mid
        if callback:
            callback(iteration, f"dt search [{lo:.4f}, {hi:.4f}]")

    logger.info(
        f"dt line search: dt*={hi:.6f} s after {iteration} bisections, "
        f"T={hi * best.n_intervals:.4f} s"
    )
    return hi, best
