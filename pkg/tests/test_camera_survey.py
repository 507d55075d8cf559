import math

import numpy as np
import pytest

from app.core.entities import CameraSpec
from app.core.errors import InvalidParameterError
from app.core.survey import (
    compute_flight_height,
    compute_footprint,
    compute_v_blur,
    generate_lawnmower,
)
from app.core.survey.camera import compute_footprint as footprint_of


class TestBlurSpeed:
    @pytest.mark.parametrize(
        "rho, g_x, shutter, expected",
        [(1.0, 1.0, 1.0, 1.0), (2.0, 50.0, 0.004, 10.0), (1.0, 100.0, 0.002, 5.0)],
    )
    def test_direct_substitution(self, rho, g_x, shutter, expected):
        camera = CameraSpec(allowable_blur_px=rho, ground_resolution_px_per_m=g_x, shutter_s=shutter)
        assert compute_v_blur(camera) == pytest.approx(expected, rel=1e-12)

    def test_homogeneous_in_blur_and_shutter(self):
        base = CameraSpec(allowable_blur_px=1.3, ground_resolution_px_per_m=47.0, shutter_s=0.003)
        v = compute_v_blur(base)
        double_rho = CameraSpec(allowable_blur_px=2.6, ground_resolution_px_per_m=47.0, shutter_s=0.003)
        double_shutter = CameraSpec(allowable_blur_px=1.3, ground_resolution_px_per_m=47.0, shutter_s=0.006)
        assert compute_v_blur(double_rho) == 2.0 * v
        assert compute_v_blur(double_shutter) == v / 2.0

    @pytest.mark.parametrize("field", ["allowable_blur_px", "ground_resolution_px_per_m", "shutter_s"])
    def test_non_positive_field_rejected(self, field):
        values = dict(allowable_blur_px=1.0, ground_resolution_px_per_m=1.0, shutter_s=1.0)
        values[field] = 0.0
        with pytest.raises(InvalidParameterError):
            compute_v_blur(CameraSpec(**values))


class TestFlightHeight:
    def test_standard_case(self):
        camera = CameraSpec(focal_length_m=0.02, image_width_px=1000, sensor_width_m=0.02)
        assert compute_flight_height(0.01, camera) == pytest.approx(10.0)

    def test_identity_case(self):
        camera = CameraSpec(focal_length_m=1.0, image_width_px=1, sensor_width_m=1.0)
        assert compute_flight_height(1.0, camera) == pytest.approx(1.0)

    def test_large_sensor(self):
        camera = CameraSpec(focal_length_m=0.02, image_width_px=4000, sensor_width_m=0.0133)
        assert compute_flight_height(0.05, camera) == pytest.approx(300.75, rel=1e-3)

    def test_non_positive_gsd(self):
        camera = CameraSpec(focal_length_m=0.02, image_width_px=1000, sensor_width_m=0.02)
        with pytest.raises(InvalidParameterError):
            compute_flight_height(0.0, camera)


class TestFootprint:
    def test_right_angle(self):
        camera = CameraSpec(fov_h_rad=math.pi / 2, fov_v_rad=math.pi / 2)
        width, height = compute_footprint(1.0, camera)
        assert width == pytest.approx(2.0)
        assert height == pytest.approx(2.0)

    def test_table1_camera(self, table1_camera):
        width, height = compute_footprint(10.0, table1_camera)
        assert width == pytest.approx(18.98, abs=0.01)
        assert height == pytest.approx(14.27, abs=0.01)

    def test_fov_at_pi_rejected(self):
        with pytest.raises(InvalidParameterError):
            compute_footprint(10.0, CameraSpec(fov_h_rad=math.pi, fov_v_rad=1.0))

    def test_altitude_must_be_positive(self, table1_camera):
        with pytest.raises(InvalidParameterError):
            compute_footprint(0.0, table1_camera)


def _covered(plan, footprint_w, footprint_h, width, height, along_x=True):
    """在 0.1 m 栅格上检查 ROI 是否被以航点为中心的影像覆盖"""
    xs = np.linspace(0.0, width, int(round(width / 0.1)) + 1)
    ys = np.linspace(0.0, height, int(round(height / 0.1)) + 1)
    gx, gy = np.meshgrid(xs, ys)
    points = np.column_stack([gx.ravel(), gy.ravel()])
    half = np.array([footprint_w, footprint_h]) / 2.0 + 1e-9
    if not along_x:
        half = half[::-1]
    covered = np.zeros(len(points), dtype=bool)
    for waypoint in plan.waypoints:
        covered |= np.all(np.abs(points - waypoint[:2]) <= half, axis=1)
    return covered.all()


class TestLawnmower:
    def test_explicit_spacing_grid(self):
        plan = generate_lawnmower(40.0, 30.0, 10.0, line_spacing_m=10.0, capture_spacing_m=10.0)
        assert plan.n_waypoints == 20
        rows = plan.waypoints.reshape(4, 5, 3)
        np.testing.assert_allclose(rows[0, :, 0], [0, 10, 20, 30, 40])
        np.testing.assert_allclose(rows[1, :, 0], [40, 30, 20, 10, 0])
        np.testing.assert_allclose(rows[:, 0, 1], [0, 10, 20, 30])
        assert np.all(plan.waypoints[:, 2] == 10.0)

    def test_consecutive_waypoints_differ_in_one_coordinate(self, table1_camera):
        plan = generate_lawnmower(40.0, 30.0, 10.0, overlap_fraction=0.5, camera=table1_camera)
        changed = np.abs(np.diff(plan.waypoints, axis=0)) > 0
        assert np.all(changed.sum(axis=1) == 1)

    def test_table1_spacing(self, table1_camera):
        plan = generate_lawnmower(40.0, 30.0, 10.0, overlap_fraction=0.5, camera=table1_camera)
        assert plan.line_spacing_m == pytest.approx(7.13, abs=0.01)
        assert plan.capture_spacing_m == pytest.approx(9.49, abs=0.01)
        assert plan.waypoints[:, 0].max() == pytest.approx(40.0)
        assert plan.waypoints[:, 1].max() == pytest.approx(30.0)

    def test_roi_smaller_than_footprint(self, table1_camera):
        plan = generate_lawnmower(5.0, 3.0, 10.0, camera=table1_camera)
        assert plan.n_waypoints == 2
        np.testing.assert_allclose(plan.waypoints[:, 1], [1.5, 1.5])
        np.testing.assert_allclose(plan.waypoints[:, 0], [0.0, 5.0])

    def test_lines_run_along_longer_side(self, table1_camera):
        plan = generate_lawnmower(30.0, 80.0, 10.0, overlap_fraction=0.5, camera=table1_camera)
        assert np.abs(np.diff(plan.waypoints[:2], axis=0))[0, 1] > 0

    @pytest.mark.parametrize("overlap", [0.0, 0.3, 0.5, 0.8])
    def test_footprints_cover_roi(self, table1_camera, overlap):
        plan = generate_lawnmower(40.0, 30.0, 10.0, overlap_fraction=overlap, camera=table1_camera)
        width, height = footprint_of(10.0, table1_camera)
        assert _covered(plan, width, height, 40.0, 30.0)

    def test_simulation_scale_grid(self, table1_camera):
        plan = generate_lawnmower(350.0, 600.0, 120.0, overlap_fraction=0.5, camera=table1_camera)
        assert plan.n_waypoints == 42
        assert np.all(plan.waypoints[:, 2] == 120.0)

    def test_zero_area_roi(self):
        plan = generate_lawnmower(0.0, 0.0, 10.0, line_spacing_m=5.0, capture_spacing_m=5.0)
        assert plan.n_waypoints == 2
        assert plan.allow_coincident
        np.testing.assert_array_equal(plan.waypoints[0], plan.waypoints[1])

    def test_overlap_out_of_range(self, table1_camera):
        with pytest.raises(InvalidParameterError):
            generate_lawnmower(40.0, 30.0, 10.0, overlap_fraction=1.0, camera=table1_camera)

    def test_camera_or_spacing_required(self):
        with pytest.raises(InvalidParameterError):
            generate_lawnmower(40.0, 30.0, 10.0)
