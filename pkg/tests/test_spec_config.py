import math

import numpy as np
import pytest

from app.config import SURVEY_PRESET_PATH
from app.common.config import (
    IntValidator,
    RangeValidator,
    VectorValidator,
    WaypointsValidator,
    load_spec,
)
from app.core.errors import SpecError
from app.core.survey.camera import compute_flight_height, compute_v_blur


ROI = {"width_m": 40.0, "height_m": 30.0, "overlap_fraction": 0.5}
CAMERA = {"fov_h_deg": 87.0, "fov_v_deg": 71.0, "focal_length_m": 0.02}


def _diagnostics(write_spec, document, overrides=None):
    with pytest.raises(SpecError) as info:
        load_spec(write_spec(document), overrides)
    return info.value.diagnostics


class TestValidators:
    def test_range(self):
        check = RangeValidator(0.0, 1.0, open_max=True)
        assert check(0.0) is None
        assert check(1.0) is not None
        assert check("0.5") is not None
        assert check(True) is not None
        assert RangeValidator(0.0, open_min=True)(math.inf) is not None
        assert RangeValidator(0.0, open_min=True, allow_inf=True)(math.inf) is None

    def test_int(self):
        assert IntValidator(1, 5)(3) is None
        assert IntValidator(1, 5)(3.0) is not None
        assert IntValidator(1, 5)(6) is not None

    def test_vectors(self):
        assert VectorValidator()([1, 2, 3]) is None
        assert VectorValidator()([1, 2]) is not None
        assert VectorValidator(allow_null=True)(None) is None
        assert WaypointsValidator()([[0, 0, 0]]) is not None
        assert "point 1" in WaypointsValidator()([[0, 0, 0], [1, "a", 0]])


class TestLoadSpec:
    def test_bundled_surveys_load(self):
        for name in ("table1.yaml", "simulation.yaml", "comparison.yaml"):
            spec = load_spec(SURVEY_PRESET_PATH / name)
            assert spec.build_plan().n_waypoints >= 2

    def test_table1_parameters(self):
        spec = load_spec(SURVEY_PRESET_PATH / "table1.yaml")
        assert spec.params.u_plan == pytest.approx(10.5)
        assert spec.params.v_blur == 8.0
        assert spec.params.v_axis_max == 12.0
        plan = spec.build_plan()
        assert plan.line_spacing_m == pytest.approx(7.13, abs=0.01)
        assert plan.capture_spacing_m == pytest.approx(9.49, abs=0.01)
        np.testing.assert_allclose(plan.waypoints[:, 2], 10.0)

    def test_explicit_waypoints(self, write_spec, line_spec_document):
        spec = load_spec(write_spec(line_spec_document))
        np.testing.assert_allclose(spec.build_plan().waypoints, [[0, 0, 0], [10, 0, 0]])
        assert math.isinf(spec.params.v_blur)
        assert math.isinf(spec.params.v_axis_max)
        assert spec.sample_rate_hz == 10

    def test_gsd_and_altitude_both_given(self, write_spec):
        document = {
            "roi": {**ROI, "altitude_m": 10.0, "gsd_m_per_px": 0.005},
            "camera": CAMERA,
            "planner": {"u_max_mps2": 10.0},
        }
        diagnostics = _diagnostics(write_spec, document)
        assert any("exactly one of" in line for line in diagnostics)

    def test_neither_gsd_nor_altitude(self, write_spec):
        document = {"roi": ROI, "camera": CAMERA, "planner": {"u_max_mps2": 10.0}}
        assert any("exactly one of" in line for line in _diagnostics(write_spec, document))

    def test_altitude_from_gsd(self, write_spec):
        camera = {**CAMERA, "sensor_width_m": 0.0063, "image_width_px": 4000}
        document = {"roi": {**ROI, "gsd_m_per_px": 0.004}, "camera": camera, "planner": {"u_max_mps2": 10.0}}
        spec = load_spec(write_spec(document))
        assert spec.flight_altitude_m == pytest.approx(compute_flight_height(0.004, spec.camera))
        np.testing.assert_allclose(spec.build_plan().waypoints[:, 2], spec.flight_altitude_m)

    def test_gsd_needs_camera_intrinsics(self, write_spec):
        document = {"roi": {**ROI, "gsd_m_per_px": 0.004}, "camera": CAMERA, "planner": {"u_max_mps2": 10.0}}
        diagnostics = _diagnostics(write_spec, document)
        assert any(line.startswith("camera.sensor_width_m") for line in diagnostics)
        assert any(line.startswith("camera.image_width_px") for line in diagnostics)

    def test_sample_rate_range(self, write_spec, line_spec_document):
        line_spec_document["output"]["sample_rate_hz"] = 2000
        diagnostics = _diagnostics(write_spec, line_spec_document)
        assert any(line.startswith("output.sample_rate_hz") for line in diagnostics)

    def test_unknown_fields_and_blocks(self, write_spec, line_spec_document):
        line_spec_document["planner"]["max_speed"] = 3
        line_spec_document["telemetry"] = {"port": 1}
        diagnostics = _diagnostics(write_spec, line_spec_document)
        assert "planner.max_speed: unknown field" in diagnostics
        assert any(line.startswith("telemetry") for line in diagnostics)

    def test_all_problems_reported_together(self, write_spec, line_spec_document):
        line_spec_document["planner"] = {"switching_points": 9}
        line_spec_document["mode"]["tolerance_profile"] = "loose"
        diagnostics = _diagnostics(write_spec, line_spec_document)
        assert "planner.u_max_mps2: required" in diagnostics
        assert any(line.startswith("planner.switching_points") for line in diagnostics)
        assert any(line.startswith("mode.tolerance_profile") for line in diagnostics)

    def test_v_blur_from_camera(self, write_spec, line_spec_document):
        line_spec_document["camera"] = {
            "allowable_blur_px": 2.0,
            "ground_resolution_px_per_m": 100.0,
            "shutter_s": 0.002,
        }
        spec = load_spec(write_spec(line_spec_document))
        assert spec.params.v_blur == pytest.approx(compute_v_blur(spec.camera))
        assert spec.params.v_blur == pytest.approx(10.0)

    def test_partial_blur_fields(self, write_spec, line_spec_document):
        line_spec_document["camera"] = {"allowable_blur_px": 2.0}
        diagnostics = _diagnostics(write_spec, line_spec_document)
        assert any("blur bound" in line for line in diagnostics)

    def test_explicit_v_blur_wins(self, write_spec, line_spec_document):
        line_spec_document["camera"] = {"allowable_blur_px": 2.0}
        line_spec_document["planner"]["v_blur_mps"] = 4.0
        assert load_spec(write_spec(line_spec_document)).params.v_blur == 4.0

    def test_infinity_spellings(self, write_spec, line_spec_document):
        line_spec_document["planner"]["v_axis_max_mps"] = "inf"
        line_spec_document["planner"]["v_blur_mps"] = float("inf")
        spec = load_spec(write_spec(line_spec_document))
        assert math.isinf(spec.params.v_axis_max)
        assert math.isinf(spec.params.v_blur)

    def test_free_end_velocity(self, write_spec, line_spec_document):
        line_spec_document["planner"]["v_end_mps"] = None
        assert load_spec(write_spec(line_spec_document)).params.v_end is None

    def test_overrides(self, write_spec, line_spec_document, tmp_path):
        spec = load_spec(
            write_spec(line_spec_document),
            {"output.sample_rate_hz": 200.0, "output.directory": str(tmp_path / "x"), "mode.smooth": False},
        )
        assert spec.sample_rate_hz == 200.0
        assert spec.out_dir == tmp_path / "x"
        assert not spec.smooth

    def test_none_override_keeps_file_value(self, write_spec, line_spec_document):
        spec = load_spec(write_spec(line_spec_document), {"output.sample_rate_hz": None})
        assert spec.sample_rate_hz == 10

    def test_unknown_override(self, write_spec, line_spec_document):
        diagnostics = _diagnostics(write_spec, line_spec_document, {"output.format": "xml"})
        assert "output.format: unknown override" in diagnostics

    def test_invalid_planner_combination(self, write_spec, line_spec_document):
        line_spec_document["planner"]["thrust_reserve_mps2"] = 20.0
        diagnostics = _diagnostics(write_spec, line_spec_document)
        assert any(line.startswith("planner:") and "thrust_reserve" in line for line in diagnostics)

    def test_coincident_waypoints_need_flag(self, write_spec, line_spec_document):
        line_spec_document["roi"]["waypoints"] = [[0, 0, 0], [0, 0, 0], [5, 0, 0]]
        assert any(line.startswith("roi:") for line in _diagnostics(write_spec, line_spec_document))
        line_spec_document["roi"]["allow_coincident"] = True
        assert load_spec(write_spec(line_spec_document)).build_plan().n_waypoints == 3

    def test_unreadable_and_malformed_files(self, tmp_path):
        with pytest.raises(SpecError):
            load_spec(tmp_path / "missing.yaml")
        bad = tmp_path / "bad.yaml"
        bad.write_text("roi: [1, 2\n", encoding="utf-8")
        with pytest.raises(SpecError):
            load_spec(bad)
        scalar = tmp_path / "scalar.yaml"
        scalar.write_text("42\n", encoding="utf-8")
        with pytest.raises(SpecError):
            load_spec(scalar)
