import math
from dataclasses import replace

import numpy as np
import pytest

from app.config import SURVEY_PRESET_PATH
from app.common.config import load_spec
from app.core.baseline.bang import plan_baseline
from app.core.entities import InputMode, NodeSolution, PlannerParams, SurveyPlan
from app.core.errors import InvalidParameterError
from app.core.nlp.planner import plan_trajectory
from app.core.trajectory.piecewise import interpolate
from app.core.trajectory.smoothing import smooth
from app.core.validation.audit import audit
from app.core.validation.oracle import analytic_min_time_1d, brute_force_min_time, forward_integrate

from tests.conftest import CORNER_WAYPOINTS


def _three_point_solution():
    """0 → 5 → 10 m，中间航点速度 10 m/s"""
    return NodeSolution(
        dt=np.full(4, 0.5),
        u=np.array([[10.0, 0, 0], [10.0, 0, 0], [-10.0, 0, 0], [-10.0, 0, 0]]),
        v=np.array([[0.0, 0, 0], [5.0, 0, 0], [10.0, 0, 0], [5.0, 0, 0], [0.0, 0, 0]]),
        r=np.array([[0.0, 0, 0], [1.25, 0, 0], [5.0, 0, 0], [8.75, 0, 0], [10.0, 0, 0]]),
        mode=InputMode.SPHERE_EQUALITY,
        switching_points=1,
    )


THREE_POINT_PLAN = SurveyPlan(waypoints=np.array([[0.0, 0, 0], [5.0, 0, 0], [10.0, 0, 0]]))


class TestForwardIntegrate:
    def test_stationary(self):
        history = forward_integrate((np.array([2.0]), np.zeros((1, 3))), ([1.0, 2.0, 3.0], np.zeros(3)))
        np.testing.assert_array_equal(history.r, np.tile([1.0, 2.0, 3.0], (len(history.t), 1)))
        assert history.t[-1] == pytest.approx(2.0)

    def test_bang_bang_final_state(self, bang_solution):
        history = forward_integrate((bang_solution.dt, bang_solution.u), (np.zeros(3), np.zeros(3)))
        r, v = history.final
        np.testing.assert_allclose(r, [10.0, 0.0, 0.0], atol=1e-9)
        np.testing.assert_allclose(v, 0.0, atol=1e-9)

    def test_fourth_order_convergence(self):
        u = lambda t: np.array([math.cos(t), 0.0, 0.0])  # noqa: E731
        exact = 1.0 - math.cos(2.0)
        errors = []
        for step in (0.1, 0.05):
            history = forward_integrate(u, (np.zeros(3), np.zeros(3)), step_s=step, duration=2.0)
            errors.append(abs(history.final[0][0] - exact))
        assert errors[0] / errors[1] >= 8.0

    def test_rejects_nonpositive_step(self):
        with pytest.raises(InvalidParameterError):
            forward_integrate((np.ones(1), np.zeros((1, 3))), (np.zeros(3), np.zeros(3)), step_s=0.0)

    def test_callable_needs_duration(self):
        with pytest.raises(InvalidParameterError):
            forward_integrate(lambda t: np.zeros(3), (np.zeros(3), np.zeros(3)))


class TestAnalytic:
    @pytest.mark.parametrize(
        "d, u_max, cap, expected",
        [
            (10.0, 10.0, math.inf, 2.0),
            (100.0, 10.0, 10.0, 11.0),
            (0.0, 10.0, 10.0, 0.0),
            (10.0, 10.0, 10.0, 2.0),
            (-10.0, 10.0, math.inf, 2.0),
        ],
    )
    def test_examples(self, d, u_max, cap, expected):
        assert analytic_min_time_1d(d, u_max, cap) == pytest.approx(expected)


class TestBruteForce:
    def test_one_dimensional_matches_analytic(self, make_line_plan):
        params = PlannerParams(u_max=10.0, v_axis_max=math.inf)
        result = brute_force_min_time(make_line_plan(10.0), params)
        assert result.feasible
        assert abs(result.time_s - 2.0) <= result.grid_cell_s + 1e-6

    def test_zero_distance(self):
        plan = SurveyPlan(waypoints=np.zeros((3, 3)), allow_coincident=True)
        result = brute_force_min_time(plan, PlannerParams(u_max=10.0, v_axis_max=10.0))
        assert result.time_s == 0.0

    def test_rejects_large_instances(self, corner_plan):
        with pytest.raises(InvalidParameterError):
            brute_force_min_time(corner_plan, PlannerParams(u_max=10.0, v_axis_max=10.0))

    @pytest.mark.slow
    def test_blur_cap_slows_the_optimum(self):
        plan = SurveyPlan(waypoints=np.array([[0.0, 0, 0], [10.0, 0, 0], [20.0, 0, 0]]))
        free = brute_force_min_time(plan, PlannerParams(u_max=10.0, v_axis_max=math.inf), grid_resolution=11)
        capped = brute_force_min_time(
            plan, PlannerParams(u_max=10.0, v_axis_max=math.inf, v_blur=2.0), grid_resolution=11
        )
        assert capped.time_s > free.time_s
        assert np.linalg.norm(capped.waypoint_velocities) <= 2.0 + 1e-9


class TestAudit:
    def test_exact_solution_passes(self, bang_solution, bang_plan, bang_params):
        traj = interpolate(bang_solution)
        report = audit(traj, bang_plan, bang_params, mode=InputMode.SPHERE_EQUALITY)
        assert report.passed
        assert report.failures == []
        assert report.families["rk4_consistency"] <= 1e-9
        np.testing.assert_allclose(report.waypoint_errors, 0.0, atol=1e-12)

    def test_waypoint_speed_above_blur_bound(self):
        params = PlannerParams(u_max=10.0, v_axis_max=math.inf, v_blur=9.9)
        traj = interpolate(_three_point_solution())
        report = audit(traj, THREE_POINT_PLAN, params, mode=InputMode.SPHERE_EQUALITY)
        assert not report.passed
        assert report.offending_waypoints == [1]
        assert report.families["waypoint_speed"] == pytest.approx(0.1)
        assert "waypoint_speed" in report.failures

    def test_sphere_deviation_only_in_equality_mode(self, bang_plan):
        params = PlannerParams(u_max=12.0, v_axis_max=math.inf)
        traj = interpolate(NodeSolution(
            dt=np.array([1.0, 1.0]),
            u=np.array([[10.0, 0, 0], [-10.0, 0, 0]]),
            v=np.array([[0.0, 0, 0], [10.0, 0, 0], [0.0, 0, 0]]),
            r=np.array([[0.0, 0, 0], [5.0, 0, 0], [10.0, 0, 0]]),
            mode=InputMode.RELAXED_INEQUALITY,
            switching_points=1,
        ))
        assert audit(traj, bang_plan, params, mode=InputMode.RELAXED_INEQUALITY).passed
        report = audit(traj, bang_plan, params, mode=InputMode.SPHERE_EQUALITY)
        assert report.families["input_norm"] == pytest.approx(2.0)

    def test_translation_invariance(self, bang_solution, bang_plan, bang_params):
        traj = interpolate(bang_solution)
        offset = np.array([120.0, -40.0, 35.0])
        base = audit(traj, bang_plan, bang_params, mode=InputMode.SPHERE_EQUALITY)
        moved = audit(
            traj.translated(offset), bang_plan.translated(offset), bang_params, mode=InputMode.SPHERE_EQUALITY
        )
        assert moved.passed == base.passed
        for name, value in base.families.items():
            assert moved.families[name] == pytest.approx(value, abs=1e-9)

    def test_baseline_delta(self, bang_solution, bang_plan, bang_params):
        traj = interpolate(bang_solution)
        baseline = plan_baseline(bang_plan, bang_params).to_trajectory()
        report = audit(traj, bang_plan, bang_params, baseline=baseline, mode=InputMode.SPHERE_EQUALITY)
        assert report.delta_time < 0
        assert report.relative_delta == pytest.approx(report.delta_time / baseline.duration)

    def test_smoothing_summary(self, bang_solution, bang_plan, bang_params):
        traj = interpolate(bang_solution)
        report = audit(traj, bang_plan, bang_params, spline=smooth(traj, bang_solution))
        assert report.smoothing.endpoint_error <= 1e-9
        assert report.smoothing.midpoint_error <= 1e-9
        assert report.smoothing.accel_ratio > 0
        assert "smoothing" in report.to_json()

    def test_clean_spline_passes(self):
        # 三点解每段恰为二次曲线，四次样条与其重合
        params = PlannerParams(u_max=10.0, v_axis_max=math.inf, v_blur=10.5)
        sol = _three_point_solution()
        traj = interpolate(sol)
        report = audit(traj, THREE_POINT_PLAN, params, spline=smooth(traj, sol), mode=InputMode.SPHERE_EQUALITY)
        assert report.passed
        assert report.smoothing.failures(report.tolerance) == []
        assert report.smoothing.accel_ratio == pytest.approx(1.0)

    def test_shifted_spline_fails_endpoint(self, bang_solution, bang_plan, bang_params):
        traj = interpolate(bang_solution)
        spline = smooth(traj, bang_solution)
        coefficients = spline.coefficients.copy()
        coefficients[0, 0] += np.array([0.1, 0.0, 0.0])
        shifted = replace(spline, coefficients=coefficients)
        report = audit(traj, bang_plan, bang_params, spline=shifted, mode=InputMode.SPHERE_EQUALITY)
        assert not report.passed
        assert "smoothed_endpoint_error" in report.failures
        assert report.smoothing.endpoint_error == pytest.approx(0.1)

    def test_bulged_spline_fails_midpoint_only(self, bang_solution, bang_plan, bang_params):
        traj = interpolate(bang_solution)
        spline = smooth(traj, bang_solution)
        # 叠加 c·s²(1−s)²，s = τ/δ：端点位置与速度不变，中点偏移 c/16
        delta = spline.durations[0]
        c = 0.16
        coefficients = spline.coefficients.copy()
        coefficients[0, 2:, 1] += [c / delta**2, -2.0 * c / delta**3, c / delta**4]
        bulged = replace(spline, coefficients=coefficients)
        report = audit(traj, bang_plan, bang_params, spline=bulged, mode=InputMode.SPHERE_EQUALITY)
        assert report.smoothing.midpoint_error == pytest.approx(0.01)
        assert report.smoothing.endpoint_error <= 1e-9
        assert "smoothed_midpoint_error" in report.failures
        assert "smoothed_endpoint_error" not in report.failures

    def test_spline_waypoint_speed_above_blur_bound(self):
        params = PlannerParams(u_max=10.0, v_axis_max=math.inf, v_blur=9.9)
        sol = _three_point_solution()
        traj = interpolate(sol)
        report = audit(traj, THREE_POINT_PLAN, params, spline=smooth(traj, sol), mode=InputMode.SPHERE_EQUALITY)
        assert report.smoothing.speed_bound == pytest.approx(9.9)
        assert report.smoothing.max_waypoint_speed == pytest.approx(10.0)
        assert "smoothed_waypoint_speed" in report.failures

    def test_unknown_profile(self, bang_solution, bang_plan, bang_params):
        with pytest.raises(InvalidParameterError):
            audit(interpolate(bang_solution), bang_plan, bang_params, profile="lenient")

# ---------- 端到端质量检查 ----------


@pytest.fixture(scope="module")
def corner_run():
    plan = SurveyPlan(waypoints=np.array(CORNER_WAYPOINTS))
    params = PlannerParams(u_max=12.0, v_axis_max=15.0, v_blur=math.inf, switching_points=3)
    sol = plan_trajectory(plan, params)
    return plan, params, sol


@pytest.mark.slow
class TestCornerRoute:
    def test_faster_than_baseline(self, corner_run):
        plan, params, sol = corner_run
        baseline = plan_baseline(plan, params)
        assert sol.total_time < baseline.total_time
        assert abs(baseline.total_time - 17.5) / 17.5 < 0.15
        assert sol.total_time <= sol.report.warm_start_time + 1e-6

    def test_total_time_near_reference(self, corner_run):
        _, _, sol = corner_run
        assert abs(sol.total_time - 16.3) / 16.3 <= 0.10

    def test_audit_passes(self, corner_run):
        plan, params, sol = corner_run
        traj = interpolate(sol, plan, params)
        baseline = plan_baseline(plan, params).to_trajectory()
        report = audit(traj, plan, params, baseline=baseline, spline=smooth(traj, sol), mode=sol.mode)
        assert report.families["waypoint_position"] <= 1e-6
        assert report.families["rk4_consistency"] <= 1e-6
        assert report.smoothing.endpoint_error <= 1e-9
        assert report.smoothing.midpoint_error <= 1e-9
        assert report.delta_time < 0

    def test_rk4_reproduces_sampled_positions(self, corner_run):
        plan, params, sol = corner_run
        traj = interpolate(sol, plan, params)
        history = forward_integrate((sol.dt, sol.u), (sol.r[0], sol.v[0]), step_s=0.01)
        times = np.linspace(0.0, traj.duration, 25)
        r, _, _ = traj.sample_many(times)
        for t, expected in zip(times, r):
            index = int(np.argmin(np.abs(history.t - t)))
            if abs(history.t[index] - t) < 1e-12:
                np.testing.assert_allclose(history.r[index], expected, atol=1e-6)
        np.testing.assert_allclose(history.final[0], plan.waypoints[-1], atol=1e-6)


def _brute_force_instances():
    return [
        ([[0, 0, 0], [10, 0, 0], [20, 0, 0]], 10.0, math.inf),
        ([[0, 0, 0], [10, 0, 0], [20, 0, 0]], 10.0, 4.0),
        ([[0, 0, 0], [10, 0, 0], [10, 10, 0]], 10.0, math.inf),
        ([[0, 0, 0], [10, 0, 0], [10, 10, 0]], 8.0, 3.0),
        ([[0, 0, 0], [5, 5, 0], [10, 0, 0]], 12.0, math.inf),
        ([[0, 0, 0], [15, 0, 0], [0, 0, 0]], 10.0, math.inf),
        ([[0, 0, 0], [6, 8, 0], [12, 16, 0]], 6.0, 5.0),
        ([[0, 0, 5], [10, 0, 5], [20, 5, 5]], 14.0, 6.0),
        ([[0, 0, 0], [8, 0, 0], [8, 4, 0]], 5.0, math.inf),
        ([[0, 0, 0], [20, 0, 0], [20, 5, 0]], 10.0, 8.0),
    ]


@pytest.mark.slow
@pytest.mark.parametrize("waypoints, u_max, v_blur", _brute_force_instances())
def test_nlp_against_brute_force(waypoints, u_max, v_blur):
    plan = SurveyPlan(waypoints=np.array(waypoints, dtype=float))
    params = PlannerParams(u_max=u_max, v_axis_max=math.inf, v_blur=v_blur)
    sol = plan_trajectory(plan, params)
    assert sol.switching_points == 1
    grid = brute_force_min_time(plan, params, grid_resolution=11)
    assert sol.total_time >= grid.time_s - grid.grid_cell_s
    assert sol.total_time <= 1.05 * grid.time_s
    assert sol.total_time <= sol.report.warm_start_time + 1e-6


@pytest.mark.slow
def test_simulation_scale_audit():
    spec = load_spec(SURVEY_PRESET_PATH / "simulation.yaml")
    plan = spec.build_plan()
    params = spec.params
    sol = plan_trajectory(plan, params)
    traj = interpolate(sol, plan, params)
    report = audit(traj, plan, params, mode=sol.mode, spline=smooth(traj, sol))
    assert max(report.waypoint_errors) <= 1e-6
    assert max(report.waypoint_speeds) <= 5.0 + 1e-6
    assert np.max(np.abs(sol.v)) <= 10.0 + 1e-6
    if sol.mode == InputMode.SPHERE_EQUALITY:
        assert report.families["input_norm"] <= 1e-6
    assert report.families["rk4_consistency"] <= 1e-6
    assert report.smoothing.endpoint_error <= 1e-9
    assert sol.total_time <= sol.report.warm_start_time + 1e-6
