import math
from typing import Callable, List, Optional, Protocol, Tuple

import numpy as np

from app.core.entities import (
    ConicSolution,
    InputMode,
    NodeSolution,
    PlannerParams,
    SolveReport,
    SurveyPlan,
    conic_solution_from_json,
    conic_solution_to_json,
    node_count,
)
from app.core.errors import (
    FallbackNeeded,
    InvalidPlanError,
    InvalidWarmStartError,
    NoFeasibleStepError,
    PlannerInfeasibleError,
)
from app.core.nlp.auglag import AugmentedLagrangian
from app.core.nlp.model import NodeModel
from app.core.nlp.residuals import evaluate_residuals
from app.core.socp.relaxation import line_search_dt
from app.core.utils.logger import setup_logger

logger = setup_logger("nlp_planner")

# AL 内部使用的可行性目标，留出余量给独立检查
FEAS_MARGIN = 0.1


class SolutionCache(Protocol):
    def get_solution(self, plan: SurveyPlan, params: PlannerParams, stage: str) -> Optional[dict]: ...

    def set_solution(self, plan: SurveyPlan, params: PlannerParams, stage: str, payload: dict) -> None: ...


def _check_warm(plan: SurveyPlan, params: PlannerParams, warm: ConicSolution) -> None:
    K = node_count(plan.n_waypoints, params.switching_points) - 1
    if (
        warm.switching_points != params.switching_points
        or warm.n_intervals != K
        or len(warm.v) != K + 1
        or len(warm.r) != K + 1
    ):
        raise InvalidWarmStartError(
            f"warm start has {warm.n_intervals} intervals at S={warm.switching_points}, "
            f"expected {K} intervals at S={params.switching_points}"
        )


def _is_stationary(plan: SurveyPlan, params: PlannerParams) -> bool:
    """所有航点重合且边界速度为零（或自由）"""
    if np.any(plan.segment_lengths > 0):
        return False
    return all(
        v is None or not np.any(np.asarray(v, dtype=float))
        for v in (params.v_start, params.v_end)
    )


def stationary_solution(plan: SurveyPlan, params: PlannerParams) -> NodeSolution:
    """零时长解：所有区间 dt=0、u=0，速度为零"""
    K = node_count(plan.n_waypoints, params.switching_points) - 1
    return NodeSolution(
        dt=np.zeros(K),
        u=np.zeros((K, 3)),
        v=np.zeros((K + 1, 3)),
        r=np.repeat(plan.waypoints[:1], K + 1, axis=0),
        mode=InputMode.SPHERE_EQUALITY,
        switching_points=params.switching_points,
        report=SolveReport(converged=True, max_violation=0.0, stationarity=0.0, warm_start_time=0.0, message="stationary"),
    )


def _run_nlp(
    plan: SurveyPlan,
    params: PlannerParams,
    warm: ConicSolution,
    mode: InputMode,
    callback: Optional[Callable[[int, str], None]] = None,
) -> NodeSolution:
    model = NodeModel(plan, params, mode)
    solver = AugmentedLagrangian(
        model,
        feas_tol=FEAS_MARGIN * params.eps_feas,
        opt_tol=params.eps_opt,
    )
    result = solver.solve(model.warm_start(warm), callback=callback)
    sol = model.to_solution(result.x)
    sol.report = SolveReport(
        converged=result.converged,
        outer_iterations=result.outer_iterations,
        inner_iterations=result.inner_iterations,
        max_violation=result.max_violation,
        stationarity=result.stationarity,
        penalty=result.penalty,
        refined=result.refined,
        warm_start_time=warm.total_time,
        warm_start_dt=warm.dt,
        message=result.message,
        merit_history=result.merit_history,
    )
    logger.debug(
        f"{mode} NLP at S={params.switching_points}: T={sol.total_time:.6f} s, "
        f"violation={result.max_violation:.2e}, stationarity={result.stationarity:.2e}, "
        f"{result.outer_iterations} outer / {result.inner_iterations} inner iterations"
    )
    return sol


def solve_min_time(
    plan: SurveyPlan,
    params: PlannerParams,
    warm: ConicSolution,
    callback: Optional[Callable[[int, str], None]] = None,
) -> NodeSolution:
    """
    球面输入等式模式下的变步长最短时间问题

    失败（不收敛、残差超限或比初值更慢）时抛出 FallbackNeeded。
    """
    _check_warm(plan, params, warm)
    if _is_stationary(plan, params):
        return stationary_solution(plan, params)

    sol = _run_nlp(plan, params, warm, InputMode.SPHERE_EQUALITY, callback)
    residuals = evaluate_residuals(sol, plan, params)
    if not sol.report.converged or not residuals.passes(params.eps_feas):
        raise FallbackNeeded(
            f"sphere-equality NLP failed at S={params.switching_points} "
            f"({sol.report.message}; violated: {residuals.violated(params.eps_feas)})",
            residuals.families,
        )
    if sol.total_time > warm.total_time + params.eps_opt:
        raise FallbackNeeded(
            f"sphere-equality NLP ended at T={sol.total_time:.6f} s, slower than the "
            f"warm start T={warm.total_time:.6f} s",
            residuals.families,
        )
    return sol


def solve_relaxed_fallback(
    plan: SurveyPlan,
    params: PlannerParams,
    warm: Optional[ConicSolution] = None,
    callback: Optional[Callable[[int, str], None]] = None,
) -> NodeSolution:
    """
    放宽为 ‖u_k‖ ≤ ū 并逐次增加切换点（S ← S+1，直到 S_max）

    每个 S 重新做 dt 线搜索得到初值。NLP 未收敛、残差超限或比初值更慢时
    视为该 S 失败，继续下一个 S；到 S_max 仍失败则抛出 PlannerInfeasibleError。
    """
    if _is_stationary(plan, params):
        return stationary_solution(plan, params)

    attempts: List[Tuple[PlannerParams, Optional[ConicSolution]]] = [
        (params.with_switching_points(S), None)
        for S in range(params.switching_points + 1, params.max_switching_points + 1)
    ]
    if not attempts:
        attempts = [(params, warm)]

    last_failure = {}
    for attempt_params, attempt_warm in attempts:
        S = attempt_params.switching_points
        logger.info(f"relaxed-inequality fallback with S={S}")
        if attempt_warm is None:
            try:
                _, attempt_warm = line_search_dt(plan, attempt_params)
            except NoFeasibleStepError as e:
                logger.warning(f"no feasible dt at S={S}: {e}")
                continue
        _check_warm(plan, attempt_params, attempt_warm)

        sol = _run_nlp(plan, attempt_params, attempt_warm, InputMode.RELAXED_INEQUALITY, callback)
        residuals = evaluate_residuals(sol, plan, attempt_params)
        if not sol.report.converged:
            reason = sol.report.message
        elif not residuals.passes(params.eps_feas):
            reason = f"violated: {residuals.violated(params.eps_feas)}"
        elif sol.total_time > attempt_warm.total_time + params.eps_opt:
            reason = f"T={sol.total_time:.6f} s is slower than the warm start T={attempt_warm.total_time:.6f} s"
        else:
            sol.report.fallback_used = True
            return sol
        logger.warning(f"relaxed NLP rejected at S={S}: {reason}")
        last_failure = residuals.families

    raise PlannerInfeasibleError(
        f"relaxed NLP infeasible up to S={params.max_switching_points}",
        last_failure,
    )


def _collapse_coincident(plan: SurveyPlan) -> Tuple[np.ndarray, List[int]]:
    """去掉与前一个航点重合的航点，返回保留的航点与原航点到保留航点的映射"""
    kept = [plan.waypoints[0]]
    mapping = [0]
    for point in plan.waypoints[1:]:
        if not np.array_equal(point, kept[-1]):
            kept.append(point)
        mapping.append(len(kept) - 1)
    return np.array(kept), mapping


def _expand(sol: NodeSolution, plan: SurveyPlan, mapping: List[int]) -> NodeSolution:
    """把去重后航点上的解展开回原航点，重合航段的区间 dt=0"""
    per_segment = sol.switching_points + 1
    dt, u, v, r = [], [], [sol.v[0]], [sol.r[0]]
    for n in range(plan.n_waypoints - 1):
        a, b = mapping[n], mapping[n + 1]
        if a == b:
            node = a * per_segment
            dt.extend([0.0] * per_segment)
            u.extend([np.zeros(3)] * per_segment)
            v.extend([sol.v[node]] * per_segment)
            r.extend([sol.r[node]] * per_segment)
        else:
            intervals = slice(a * per_segment, b * per_segment)
            dt.extend(sol.dt[intervals])
            u.extend(sol.u[intervals])
            v.extend(sol.v[a * per_segment + 1 : b * per_segment + 1])
            r.extend(sol.r[a * per_segment + 1 : b * per_segment + 1])
    return NodeSolution(
        dt=np.array(dt, dtype=float),
        u=np.array(u, dtype=float),
        v=np.array(v, dtype=float),
        r=np.array(r, dtype=float),
        mode=sol.mode,
        switching_points=sol.switching_points,
        report=sol.report,
    )


def plan_trajectory(
    plan: SurveyPlan,
    params: PlannerParams,
    cache: Optional[SolutionCache] = None,
    callback: Optional[Callable[[int, str], None]] = None,
) -> NodeSolution:
    """
    完整求解流程：dt 线搜索 → 球面等式 NLP → 必要时放宽并增加切换点

    重合的相邻航点先合并，求解后再展开为 dt=0 的区间。
    """
    if cache is not None:
        cached = cache.get_solution(plan, params, "nlp")
        if cached is not None:
            logger.info("NLP solution loaded from cache")
            return NodeSolution.from_json(cached)

    kept, mapping = _collapse_coincident(plan)
    if len(kept) < 2:
        if not _is_stationary(plan, params):
            raise InvalidPlanError(
                "all waypoints coincide but the boundary velocities are not zero"
            )
        sol = stationary_solution(plan, params)
        if cache is not None:
            cache.set_solution(plan, params, "nlp", sol.to_json())
        return sol
    reduced = SurveyPlan(
        waypoints=kept,
        altitude_m=plan.altitude_m,
        line_spacing_m=plan.line_spacing_m,
        capture_spacing_m=plan.capture_spacing_m,
    )

    def progress(step: int, message: str):
        if callback:
            callback(step, message)

    warm = None
    if cache is not None:
        cached = cache.get_solution(reduced, params, "socp")
        if cached is not None:
            warm = conic_solution_from_json(cached)
            logger.info("dt line search result loaded from cache")
    try:
        if warm is None:
            progress(10, "dt line search")
            _, warm = line_search_dt(reduced, params)
            if cache is not None:
                cache.set_solution(reduced, params, "socp", conic_solution_to_json(warm))
        progress(40, "sphere-equality NLP")
        sol = solve_min_time(reduced, params, warm)
    except (FallbackNeeded, NoFeasibleStepError) as e:
        logger.info(f"falling back to the relaxed NLP: {e}")
        progress(60, "relaxed-inequality NLP")
        sol = solve_relaxed_fallback(reduced, params, warm)

    if len(kept) != plan.n_waypoints:
        sol = _expand(sol, plan, mapping)
    logger.info(
        f"NLP finished: T={sol.total_time:.6f} s, mode={sol.mode}, S={sol.switching_points}"
    )
    if cache is not None:
        cache.set_solution(plan, params, "nlp", sol.to_json())
    return sol
