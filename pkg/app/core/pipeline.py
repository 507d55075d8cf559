"""命令行流程：航点 → dt 线搜索 → NLP → 插值 → 平滑 → 基准 → 审计 → 导出"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import pandas as pd

from app.common.config import SurveySpec
from app.config import VERSION
from app.core.baseline.bang import plan_baseline
from app.core.entities import NodeSolution, PlannerMethod, SurveyPlan
from app.core.errors import (
    InfeasibleAxisError,
    InvalidParameterError,
    InvalidPlanError,
    NoFeasibleStepError,
    PlannerInfeasibleError,
    SpecError,
    SurveyPlannerError,
)
from app.core.nlp.planner import SolutionCache, plan_trajectory
from app.core.nlp.residuals import evaluate_residuals
from app.core.trajectory.export import (
    FLOAT_FORMAT,
    plot_frame,
    waypoint_markers,
    write_frames,
    write_json,
    write_segment_table,
    write_trajectory_csv,
    write_waypoints,
)
from app.core.trajectory.piecewise import PiecewiseTrajectory, interpolate
from app.core.trajectory.smoothing import smooth
from app.core.utils.logger import setup_logger
from app.core.validation.audit import AuditReport, audit, trajectory_stats

logger = setup_logger("pipeline")

ProgressCallback = Callable[[int, str], None]

WAYPOINTS_FILE = "waypoints.json"
TRAJECTORY_FILE = "trajectory.csv"
SMOOTHED_FILE = "trajectory_smoothed.csv"
BASELINE_FILE = "trajectory_baseline.csv"
SEGMENTS_FILE = "segments.json"
AUDIT_FILE = "audit.json"
PLOT_FILE = "plot_data.csv"
MARKERS_FILE = "waypoints_markers.csv"
INFEASIBLE_FILE = "infeasible.json"
COMPARE_JSON = "compare.json"
COMPARE_CSV = "compare.csv"


class ExitCode(IntEnum):
    OK = 0
    SPEC_ERROR = 2
    INFEASIBLE = 3
    INTERNAL_ERROR = 4


@dataclass
class RunResult:
    exit_code: ExitCode
    artifacts: Dict[str, Path] = field(default_factory=dict)
    audit: Optional[AuditReport] = None
    solution: Optional[NodeSolution] = None
    message: str = ""


@dataclass
class CompareRow:
    method: str
    v_blur: float
    total_time: Optional[float] = None
    max_waypoint_speed: Optional[float] = None
    max_input_norm: Optional[float] = None
    status: str = "ok"
    error: str = ""


@dataclass
class CompareResult:
    exit_code: ExitCode
    rows: List[CompareRow] = field(default_factory=list)
    relative_delta: Dict[str, Optional[float]] = field(default_factory=dict)
    artifacts: Dict[str, Path] = field(default_factory=dict)


def _emit(callback: Optional[ProgressCallback], value: int, message: str) -> None:
    logger.info(message)
    if callback:
        callback(value, message)


def _infeasible_report(error: Exception) -> dict:
    return {
        "version": VERSION,
        "error": type(error).__name__,
        "message": str(error),
        "residuals": getattr(error, "residuals", {}),
    }


def run(
    spec: SurveySpec,
    out_dir: Optional[Path] = None,
    callback: Optional[ProgressCallback] = None,
    cache: Optional[SolutionCache] = None,
) -> RunResult:
    """
    执行完整流程并写出产物

    退出码：0 审计通过；3 规划不可行或审计不通过；4 内部错误
    输出只依赖任务文件，不含时间戳
    """
    out_dir = Path(out_dir or spec.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = RunResult(exit_code=ExitCode.INTERNAL_ERROR)
    params = spec.params

    logger.info("\n===========航测轨迹规划开始===========")
    _emit(callback, 0, "generating waypoints")
    plan = spec.build_plan()
    result.artifacts["waypoints"] = write_waypoints(plan, out_dir / WAYPOINTS_FILE)
    logger.info(f"{plan.n_waypoints} waypoints at altitude {plan.altitude_m:.3f} m")
    if spec.waypoints_only:
        result.exit_code = ExitCode.OK
        result.message = "waypoints only"
        _emit(callback, 100, "waypoints written")
        return result

    if params.blur_redundant and math.isfinite(params.v_blur):
        logger.info(
            f"v_blur={params.v_blur:.3f} m/s exceeds √3·v̄; blur cones cannot bind and are dropped"
        )

    def planner_progress(value: int, message: str):
        if callback:
            callback(5 + int(value * 0.55), message)

    try:
        sol = plan_trajectory(plan, params, cache=cache, callback=planner_progress)
    except (PlannerInfeasibleError, NoFeasibleStepError) as e:
        logger.error(f"planner infeasible: {e}")
        result.artifacts["infeasible"] = write_json(_infeasible_report(e), out_dir / INFEASIBLE_FILE)
        result.exit_code = ExitCode.INFEASIBLE
        result.message = str(e)
        return result
    result.solution = sol

    _emit(callback, 60, "interpolating trajectory")
    traj = interpolate(sol, plan, params, tol=params.eps_feas)
    result.artifacts["trajectory"] = write_trajectory_csv(traj, out_dir / TRAJECTORY_FILE, spec.sample_rate_hz)
    result.artifacts["segments"] = write_segment_table(traj, out_dir / SEGMENTS_FILE)
    frames = [plot_frame(str(PlannerMethod.NLP), traj, spec.sample_rate_hz)]

    spline = None
    if spec.smooth:
        _emit(callback, 70, "smoothing with quartic segments")
        spline = smooth(traj, sol)
        result.artifacts["smoothed"] = write_trajectory_csv(spline, out_dir / SMOOTHED_FILE, spec.sample_rate_hz)
        frames.append(plot_frame("smoothed", spline, spec.sample_rate_hz))

    baseline_traj, baseline_error = None, ""
    if spec.baseline:
        _emit(callback, 80, "planning bang-singular-bang baseline")
        try:
            baseline_traj = plan_baseline(plan, params).to_trajectory()
        except InfeasibleAxisError as e:
            baseline_error = str(e)
            logger.warning(f"baseline unavailable: {e}")
        else:
            result.artifacts["baseline"] = write_trajectory_csv(
                baseline_traj, out_dir / BASELINE_FILE, spec.sample_rate_hz
            )
            frames.append(plot_frame(str(PlannerMethod.BASELINE), baseline_traj, spec.sample_rate_hz))

    _emit(callback, 90, "auditing constraints")
    report = audit(
        traj,
        plan,
        params,
        baseline=baseline_traj,
        spline=spline,
        mode=sol.mode,
        profile=spec.tolerance_profile,
    )
    result.audit = report
    document = {
        "version": VERSION,
        "spec": spec.source.name if spec.source else None,
        "mode": str(sol.mode),
        "switching_points": sol.switching_points,
        "total_time_s": sol.total_time,
        "blur_redundant": params.blur_redundant,
        "waypoint_speed_bound": params.waypoint_speed_bound,
        "audit": report.to_json(),
        "solve": sol.report.to_json(),
        "residuals": evaluate_residuals(sol, plan, params).to_json(),
        "baseline": trajectory_stats(baseline_traj, baseline_traj.waypoint_times)
        if baseline_traj is not None
        else {"error": baseline_error} if baseline_error else None,
    }
    result.artifacts["audit"] = write_json(document, out_dir / AUDIT_FILE)

    if spec.plot_data:
        result.artifacts["plot_data"] = write_frames(frames, out_dir / PLOT_FILE)
        result.artifacts["markers"] = write_frames(
            [waypoint_markers(traj, plan, traj.waypoint_times)], out_dir / MARKERS_FILE
        )

    result.exit_code = ExitCode.OK if report.passed else ExitCode.INFEASIBLE
    result.message = "audit passed" if report.passed else "audit failed: " + ", ".join(report.failures)
    _emit(callback, 100, result.message)
    logger.info("===========航测轨迹规划完成===========")
    return result


def _nlp_trajectory(plan: SurveyPlan, spec: SurveySpec, cache: Optional[SolutionCache]) -> PiecewiseTrajectory:
    sol = plan_trajectory(plan, spec.params, cache=cache)
    return interpolate(sol, plan, spec.params, tol=spec.params.eps_feas)


def _baseline_trajectory(plan: SurveyPlan, spec: SurveySpec) -> PiecewiseTrajectory:
    return plan_baseline(plan, spec.params).to_trajectory()


def _row(method: str, v_blur: float, future) -> CompareRow:
    row = CompareRow(method=method, v_blur=v_blur)
    try:
        traj = future.result()
    except (SurveyPlannerError, ArithmeticError) as e:
        logger.error(f"{method} failed at v_blur={v_blur}: {e}")
        row.status, row.error = "failed", f"{type(e).__name__}: {e}"
        return row
    stats = trajectory_stats(traj, traj.waypoint_times)
    row.total_time = stats["total_time"]
    row.max_waypoint_speed = stats["max_waypoint_speed"]
    row.max_input_norm = stats["max_input_norm"]
    return row


def compare(
    spec: SurveySpec,
    out_dir: Optional[Path] = None,
    callback: Optional[ProgressCallback] = None,
    cache: Optional[SolutionCache] = None,
    blur_sweep: Optional[Sequence[float]] = None,
) -> CompareResult:
    """
    同一航点与参数下对比 NLP 与 bang-singular-bang 基准

    两个规划器只共享不可变输入，并发执行；任一失败时仍写出部分报告
    """
    out_dir = Path(out_dir or spec.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    plan = spec.build_plan()
    sweep = list(blur_sweep) if blur_sweep else [spec.params.v_blur]
    result = CompareResult(exit_code=ExitCode.OK)

    logger.info("\n===========规划方法对比开始===========")
    for i, v_blur in enumerate(sweep):
        current = spec.with_v_blur(v_blur) if blur_sweep else spec
        _emit(callback, int(100 * i / len(sweep)), f"comparing planners at v_blur={v_blur}")
        with ThreadPoolExecutor(max_workers=2) as executor:
            nlp_future = executor.submit(_nlp_trajectory, plan, current, cache)
            baseline_future = executor.submit(_baseline_trajectory, plan, current)
            nlp_row = _row(str(PlannerMethod.NLP), v_blur, nlp_future)
            baseline_row = _row(str(PlannerMethod.BASELINE), v_blur, baseline_future)
        result.rows.extend([nlp_row, baseline_row])

        key = str(v_blur)
        if nlp_row.total_time is not None and baseline_row.total_time is not None:
            base = baseline_row.total_time
            result.relative_delta[key] = (nlp_row.total_time - base) / base if base > 0 else 0.0
            logger.info(
                f"v_blur={v_blur}: NLP {nlp_row.total_time:.4f} s vs baseline {base:.4f} s"
            )
        else:
            result.relative_delta[key] = None
            result.exit_code = ExitCode.INFEASIBLE

    frame = pd.DataFrame([row.__dict__ for row in result.rows])
    result.artifacts["compare_csv"] = out_dir / COMPARE_CSV
    frame.to_csv(result.artifacts["compare_csv"], index=False, float_format=FLOAT_FORMAT)
    result.artifacts["compare_json"] = write_json(
        {
            "version": VERSION,
            "spec": spec.source.name if spec.source else None,
            "rows": [row.__dict__ for row in result.rows],
            "relative_delta": result.relative_delta,
        },
        out_dir / COMPARE_JSON,
    )
    _emit(callback, 100, "comparison written")
    logger.info("===========规划方法对比完成===========")
    return result


def exit_code_for(error: BaseException) -> ExitCode:
    """异常到退出码的映射"""
    if isinstance(error, (SpecError, InvalidParameterError, InvalidPlanError)):
        return ExitCode.SPEC_ERROR
    if isinstance(error, (PlannerInfeasibleError, NoFeasibleStepError, InfeasibleAxisError)):
        return ExitCode.INFEASIBLE
    return ExitCode.INTERNAL_ERROR
