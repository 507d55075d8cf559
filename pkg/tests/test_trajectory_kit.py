import json

import numpy as np
import pandas as pd
import pytest

from app.core.entities import InputMode, NodeSolution
from app.core.errors import OutOfRangeError, StaleSolutionError
from app.core.trajectory.export import (
    TRAJECTORY_COLUMNS,
    plot_frame,
    sample_times,
    waypoint_markers,
    write_segment_table,
    write_trajectory_csv,
)
from app.core.trajectory.piecewise import interpolate, sample
from app.core.trajectory.smoothing import smooth
from app.core.validation.oracle import forward_integrate


class TestInterpolate:
    def test_bang_bang_kinematics(self, bang_solution, bang_plan, bang_params):
        traj = interpolate(bang_solution, bang_plan, bang_params)
        r, v, _ = sample(traj, 1.0)
        assert r[0] == pytest.approx(5.0)
        assert v[0] == pytest.approx(10.0)
        r, v, _ = sample(traj, 2.0)
        assert r[0] == pytest.approx(10.0)
        assert v[0] == pytest.approx(0.0)
        r, v, _ = sample(traj, 0.5)
        assert r[0] == pytest.approx(1.25)
        np.testing.assert_allclose(traj.waypoint_times, [0.0, 2.0])

    def test_switch_time_samples_left_interval(self, bang_solution):
        traj = interpolate(bang_solution)
        _, _, u = traj.sample(1.0)
        assert u[0] == 10.0
        _, _, u = traj.sample(1.0 + 1e-9)
        assert u[0] == -10.0

    def test_sample_many_matches_sample(self, bang_solution):
        traj = interpolate(bang_solution)
        times = np.linspace(0.0, 2.0, 17)
        r, v, a = traj.sample_many(times)
        for i, t in enumerate(times):
            r_i, v_i, a_i = traj.sample(float(t))
            np.testing.assert_allclose(r[i], r_i, atol=1e-12)
            np.testing.assert_allclose(v[i], v_i, atol=1e-12)
            np.testing.assert_array_equal(a[i], a_i)

    def test_out_of_range(self, bang_solution):
        traj = interpolate(bang_solution)
        with pytest.raises(OutOfRangeError):
            traj.sample(-0.1)
        with pytest.raises(OutOfRangeError):
            traj.sample_many(np.array([0.0, 2.5]))

    def test_stale_solution_rejected(self, bang_solution, bang_plan, bang_params):
        bang_solution.r[1] = bang_solution.r[1] + np.array([1.0, 0.0, 0.0])
        with pytest.raises(StaleSolutionError):
            interpolate(bang_solution, bang_plan, bang_params)
        with pytest.raises(StaleSolutionError):
            interpolate(bang_solution)

    def test_translation(self, bang_solution):
        traj = interpolate(bang_solution).translated([1.0, 2.0, 3.0])
        r, _, _ = traj.sample(2.0)
        np.testing.assert_allclose(r, [11.0, 2.0, 3.0])

    def test_rk4_reintegration_matches_nodes(self, bang_solution):
        history = forward_integrate(
            (bang_solution.dt, bang_solution.u), (bang_solution.r[0], bang_solution.v[0]), step_s=0.01
        )
        r_end, v_end = history.final
        np.testing.assert_allclose(r_end, bang_solution.r[-1], atol=1e-9)
        np.testing.assert_allclose(v_end, bang_solution.v[-1], atol=1e-9)


class TestSmoothing:
    def test_conditions_hold(self, bang_solution):
        traj = interpolate(bang_solution)
        spline = smooth(traj, bang_solution)
        a = spline.coefficients[0]
        np.testing.assert_allclose(a[0], 0.0, atol=1e-12)
        np.testing.assert_allclose(a[1], 0.0, atol=1e-12)
        r_mid, _, _ = spline.sample(1.0)
        assert r_mid[0] == pytest.approx(5.0, abs=1e-9)
        r_end, v_end, _ = spline.evaluate(0, 2.0)
        assert r_end[0] == pytest.approx(10.0, abs=1e-9)
        assert v_end[0] == pytest.approx(0.0, abs=1e-9)

    def test_smoothed_path_deviates_between_conditions(self, bang_solution):
        traj = interpolate(bang_solution)
        spline = smooth(traj, bang_solution)
        r_smooth, _, _ = spline.sample(0.5)
        r_piecewise, _, _ = traj.sample(0.5)
        assert abs(r_smooth[0] - r_piecewise[0]) > 0.1

    def test_constant_velocity_segment_degenerates_to_line(self):
        sol = NodeSolution(
            dt=np.array([1.0, 1.0]),
            u=np.zeros((2, 3)),
            v=np.tile([5.0, 0.0, 0.0], (3, 1)),
            r=np.array([[0.0, 0.0, 0.0], [5.0, 0.0, 0.0], [10.0, 0.0, 0.0]]),
            mode=InputMode.RELAXED_INEQUALITY,
            switching_points=1,
        )
        spline = smooth(interpolate(sol), sol)
        np.testing.assert_allclose(spline.coefficients[0, 2:], 0.0, atol=1e-9)
        np.testing.assert_allclose(spline.coefficients[0, 1], [5.0, 0.0, 0.0], atol=1e-9)

    def test_conditions_on_every_segment(self):
        sol = NodeSolution(
            dt=np.ones(4),
            u=np.array([[10.0, 0, 0], [-10.0, 0, 0], [10.0, 0, 0], [-10.0, 0, 0]]),
            v=np.array([[0.0, 0, 0], [10.0, 0, 0], [0.0, 0, 0], [10.0, 0, 0], [0.0, 0, 0]]),
            r=np.array([[0.0, 0, 0], [5.0, 0, 0], [10.0, 0, 0], [15.0, 0, 0], [20.0, 0, 0]]),
            mode=InputMode.SPHERE_EQUALITY,
            switching_points=1,
        )
        traj = interpolate(sol)
        spline = smooth(traj, sol)
        assert len(spline.durations) == 2
        for k, node in enumerate(sol.waypoint_node_indices[:-1]):
            r0, v0, _ = spline.evaluate(k, 0.0)
            r1, v1, _ = spline.evaluate(k, spline.durations[k])
            r_mid, _, _ = spline.evaluate(k, 0.5 * spline.durations[k])
            np.testing.assert_allclose(r0, sol.r[node], atol=1e-9)
            np.testing.assert_allclose(v0, sol.v[node], atol=1e-9)
            np.testing.assert_allclose(r1, sol.r[node + 2], atol=1e-9)
            np.testing.assert_allclose(v1, sol.v[node + 2], atol=1e-9)
            np.testing.assert_allclose(r_mid, sol.r[node + 1], atol=1e-9)

class TestExport:
    def test_sample_times_include_end(self):
        times = sample_times(1.05, 10.0)
        assert times[0] == 0.0
        assert times[-1] == pytest.approx(1.05)
        assert np.all(np.diff(times) > 0)

    def test_trajectory_csv(self, bang_solution, tmp_path):
        traj = interpolate(bang_solution)
        path = write_trajectory_csv(traj, tmp_path / "trajectory.csv", 10.0)
        header = path.read_text().splitlines()[0]
        assert header == ",".join(TRAJECTORY_COLUMNS)
        frame = pd.read_csv(path)
        assert len(frame) == 21
        assert frame["x"].iloc[-1] == pytest.approx(10.0)
        assert frame["vx"].max() == pytest.approx(10.0)

    def test_segment_table(self, bang_solution, tmp_path):
        traj = interpolate(bang_solution)
        path = write_segment_table(traj, tmp_path / "segments.json")
        intervals = json.loads(path.read_text())["intervals"]
        assert [item["duration"] for item in intervals] == [1.0, 1.0]
        assert intervals[1]["u"] == [-10.0, 0.0, 0.0]

    def test_plot_frames(self, bang_solution, bang_plan):
        traj = interpolate(bang_solution)
        frame = plot_frame("nlp", traj, 4.0)
        assert list(frame.columns) == ["method", "t", "speed", "input_norm"]
        assert set(frame["method"]) == {"nlp"}
        markers = waypoint_markers(traj, bang_plan, traj.waypoint_times)
        np.testing.assert_allclose(markers["speed"], [0.0, 0.0], atol=1e-12)
