# coding:utf-8
"""航测任务文件（YAML）的读取与校验"""

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import yaml

from app.config import SAMPLE_RATE_HZ, SWITCHING_POINTS_MAX, TOLERANCE_PROFILES, WORK_PATH
from app.core.entities import CameraSpec, PlannerParams, SurveyPlan
from app.core.errors import InvalidParameterError, InvalidPlanError, SpecError
from app.core.survey.camera import compute_flight_height, compute_v_blur
from app.core.survey.lawnmower import generate_lawnmower
from app.core.utils.logger import setup_logger

logger = setup_logger("survey_spec")


class _Missing:
    def __repr__(self):
        return "<missing>"


MISSING = _Missing()

Check = Callable[[Any], Optional[str]]


class RangeValidator:
    """数值范围校验，闭区间；open_min 表示下界不可取"""

    def __init__(
        self, min_value=-math.inf, max_value=math.inf, open_min=False, open_max=False, allow_inf=False
    ):
        self.min, self.max = min_value, max_value
        self.open_min, self.open_max = open_min, open_max
        self.allow_inf = allow_inf

    def __call__(self, value) -> Optional[str]:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return f"expected a number, got {value!r}"
        if math.isnan(value) or (math.isinf(value) and not self.allow_inf):
            return f"expected a finite number, got {value!r}"
        low_ok = value > self.min if self.open_min else value >= self.min
        high_ok = value < self.max if self.open_max else value <= self.max
        if not (low_ok and high_ok):
            left = "(" if self.open_min else "["
            right = ")" if self.open_max else "]"
            return f"must lie in {left}{self.min}, {self.max}{right}, got {value}"
        return None


class IntValidator(RangeValidator):
    def __call__(self, value) -> Optional[str]:
        if isinstance(value, bool) or not isinstance(value, int):
            return f"expected an integer, got {value!r}"
        return super().__call__(value)


class OptionsValidator:
    def __init__(self, options: Sequence[Any]):
        self.options = list(options)

    def __call__(self, value) -> Optional[str]:
        if value not in self.options:
            return f"must be one of {self.options}, got {value!r}"
        return None


class BoolValidator:
    def __call__(self, value) -> Optional[str]:
        if not isinstance(value, bool):
            return f"expected true/false, got {value!r}"
        return None


class VectorValidator:
    """三维向量；allow_null 时 null 表示自由"""

    def __init__(self, allow_null=False):
        self.allow_null = allow_null

    def __call__(self, value) -> Optional[str]:
        if value is None and self.allow_null:
            return None
        if (
            not isinstance(value, (list, tuple))
            or len(value) != 3
            or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in value)
        ):
            return f"expected [x, y, z], got {value!r}"
        return None


class WaypointsValidator:
    def __call__(self, value) -> Optional[str]:
        if not isinstance(value, list) or len(value) < 2:
            return "expected a list of at least two [x, y, z] points"
        for i, point in enumerate(value):
            problem = VectorValidator()(point)
            if problem:
                return f"point {i}: {problem}"
        return None


class PathValidator:
    def __call__(self, value) -> Optional[str]:
        if not isinstance(value, str) or not value:
            return f"expected a directory path, got {value!r}"
        return None


@dataclass(frozen=True)
class SpecField:
    """任务文件中的一个字段：块内路径、默认值（MISSING 表示可省略）与校验器"""

    path: str
    default: Any = MISSING
    check: Optional[Check] = None

    @property
    def block(self) -> str:
        return self.path.split(".", 1)[0]

    @property
    def key(self) -> str:
        return self.path.split(".", 1)[1]


positive = RangeValidator(0.0, open_min=True)
non_negative = RangeValidator(0.0)

# 字段表：单位写在字段名中，角度为度
SPEC_FIELDS: Tuple[SpecField, ...] = (
    # ROI
    SpecField("roi.width_m", MISSING, non_negative),
    SpecField("roi.height_m", MISSING, non_negative),
    SpecField("roi.overlap_fraction", 0.0, RangeValidator(0.0, 1.0, open_max=True)),
    SpecField("roi.altitude_m", MISSING, positive),
    SpecField("roi.gsd_m_per_px", MISSING, positive),
    SpecField("roi.line_spacing_m", MISSING, positive),
    SpecField("roi.capture_spacing_m", MISSING, positive),
    SpecField("roi.waypoints", MISSING, WaypointsValidator()),
    SpecField("roi.allow_coincident", False, BoolValidator()),
    # 相机
    SpecField("camera.allowable_blur_px", MISSING, positive),
    SpecField("camera.ground_resolution_px_per_m", MISSING, positive),
    SpecField("camera.shutter_s", MISSING, positive),
    SpecField("camera.fov_h_deg", MISSING, RangeValidator(0.0, 180.0, open_min=True, open_max=True)),
    SpecField("camera.fov_v_deg", MISSING, RangeValidator(0.0, 180.0, open_min=True, open_max=True)),
    SpecField("camera.focal_length_m", MISSING, positive),
    SpecField("camera.sensor_width_m", MISSING, positive),
    SpecField("camera.image_width_px", MISSING, positive),
    # 规划器
    SpecField("planner.u_max_mps2", MISSING, positive),
    SpecField("planner.v_axis_max_mps", math.inf, RangeValidator(0.0, open_min=True, allow_inf=True)),
    SpecField("planner.v_blur_mps", MISSING, RangeValidator(0.0, open_min=True, allow_inf=True)),
    SpecField("planner.switching_points", 1, IntValidator(1, SWITCHING_POINTS_MAX)),
    SpecField("planner.max_switching_points", SWITCHING_POINTS_MAX, IntValidator(1, 20)),
    SpecField("planner.u_z_min_mps2", None, None),
    SpecField("planner.thrust_reserve_mps2", 0.0, non_negative),
    SpecField("planner.v_start_mps", [0.0, 0.0, 0.0], VectorValidator(allow_null=True)),
    SpecField("planner.v_end_mps", [0.0, 0.0, 0.0], VectorValidator(allow_null=True)),
    # 输出
    SpecField("output.directory", str(WORK_PATH), PathValidator()),
    SpecField("output.sample_rate_hz", SAMPLE_RATE_HZ, RangeValidator(1.0, 1000.0)),
    SpecField("output.plot_data", True, BoolValidator()),
    # 模式
    SpecField("mode.smooth", True, BoolValidator()),
    SpecField("mode.baseline", True, BoolValidator()),
    SpecField("mode.waypoints_only", False, BoolValidator()),
    SpecField("mode.tolerance_profile", "default", OptionsValidator(sorted(TOLERANCE_PROFILES))),
    SpecField("mode.cache", True, BoolValidator()),
)

FIELDS_BY_PATH: Dict[str, SpecField] = {f.path: f for f in SPEC_FIELDS}
BLOCKS = ("roi", "camera", "planner", "output", "mode")


@dataclass
class SurveySpec:
    """校验后的航测任务"""

    roi_width_m: Optional[float]
    roi_height_m: Optional[float]
    overlap_fraction: float
    altitude_m: Optional[float]
    gsd_m_per_px: Optional[float]
    line_spacing_m: Optional[float]
    capture_spacing_m: Optional[float]
    waypoints: Optional[np.ndarray]
    allow_coincident: bool
    camera: CameraSpec
    params: PlannerParams
    out_dir: Path
    sample_rate_hz: float
    plot_data: bool = True
    smooth: bool = True
    baseline: bool = True
    waypoints_only: bool = False
    tolerance_profile: str = "default"
    use_cache: bool = True
    source: Optional[Path] = None
    raw: Dict[str, Any] = field(default_factory=dict, repr=False)

    @property
    def flight_altitude_m(self) -> Optional[float]:
        if self.altitude_m is not None:
            return self.altitude_m
        if self.gsd_m_per_px is not None:
            return compute_flight_height(self.gsd_m_per_px, self.camera)
        return None

    def build_plan(self) -> SurveyPlan:
        """显式航点优先，否则按 ROI 生成蛇形航线"""
        if self.waypoints is not None:
            altitude = float(self.waypoints[0, 2])
            return SurveyPlan(
                waypoints=self.waypoints,
                altitude_m=altitude,
                allow_coincident=self.allow_coincident,
            )
        return generate_lawnmower(
            self.roi_width_m,
            self.roi_height_m,
            self.flight_altitude_m,
            overlap_fraction=self.overlap_fraction,
            camera=self.camera,
            line_spacing_m=self.line_spacing_m,
            capture_spacing_m=self.capture_spacing_m,
        )

    def with_v_blur(self, v_blur: float) -> "SurveySpec":
        return replace(self, params=replace(self.params, v_blur=v_blur))


def _read_document(path: Path) -> Dict[str, Any]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise SpecError([f"{path}: cannot read spec file ({e.strerror or e})"])
    try:
        document = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise SpecError([f"{path}: invalid YAML ({e})"])
    if document is None:
        document = {}
    if not isinstance(document, dict):
        raise SpecError([f"{path}: top level must be a mapping of blocks {list(BLOCKS)}"])
    return document


def _flatten(document: Dict[str, Any], diagnostics: List[str]) -> Dict[str, Any]:
    values: Dict[str, Any] = {}
    for block, content in document.items():
        if block not in BLOCKS:
            diagnostics.append(f"{block}: unknown block, expected one of {list(BLOCKS)}")
            continue
        if content is None:
            continue
        if not isinstance(content, dict):
            diagnostics.append(f"{block}: expected a mapping")
            continue
        for key, value in content.items():
            path = f"{block}.{key}"
            if path not in FIELDS_BY_PATH:
                diagnostics.append(f"{path}: unknown field")
                continue
            values[path] = value
    return values


def _coerce_numbers(values: Dict[str, Any]) -> None:
    # YAML 中 "inf" 等字符串写法
    for path, value in list(values.items()):
        if isinstance(value, str) and value.strip().lower() in ("inf", "+inf", ".inf", "infinity"):
            values[path] = math.inf


def _camera_from(values: Dict[str, Any]) -> CameraSpec:
    def get(key):
        value = values.get(f"camera.{key}", MISSING)
        return None if value is MISSING else float(value)

    fov_h, fov_v = get("fov_h_deg"), get("fov_v_deg")
    return CameraSpec(
        allowable_blur_px=get("allowable_blur_px"),
        ground_resolution_px_per_m=get("ground_resolution_px_per_m"),
        shutter_s=get("shutter_s"),
        fov_h_rad=None if fov_h is None else math.radians(fov_h),
        fov_v_rad=None if fov_v is None else math.radians(fov_v),
        focal_length_m=get("focal_length_m"),
        sensor_width_m=get("sensor_width_m"),
        image_width_px=get("image_width_px"),
    )


BLUR_FIELDS = ("allowable_blur_px", "ground_resolution_px_per_m", "shutter_s")


def _derive_v_blur(values: Dict[str, Any], camera: CameraSpec, diagnostics: List[str]) -> float:
    given = values.get("planner.v_blur_mps", MISSING)
    if given is not MISSING:
        return float(given)
    present = [name for name in BLUR_FIELDS if getattr(camera, name) is not None]
    if not present:
        return math.inf
    if len(present) < len(BLUR_FIELDS):
        missing = [name for name in BLUR_FIELDS if name not in present]
        diagnostics.append(
            f"camera: blur bound needs {list(BLUR_FIELDS)}, missing {missing} "
            "(or give planner.v_blur_mps)"
        )
        return math.inf
    v_blur = compute_v_blur(camera)
    logger.info(f"v_blur derived from camera: {v_blur:.4f} m/s")
    return v_blur


def _check_geometry(values: Dict[str, Any], diagnostics: List[str]) -> None:
    has = lambda path: values.get(path, MISSING) is not MISSING  # noqa: E731
    if has("roi.waypoints"):
        return
    for path in ("roi.width_m", "roi.height_m"):
        if not has(path):
            diagnostics.append(f"{path}: required unless roi.waypoints is given")
    if has("roi.gsd_m_per_px") == has("roi.altitude_m"):
        diagnostics.append(
            "roi: exactly one of {gsd_m_per_px + camera, altitude_m} must be provided"
        )
    elif has("roi.gsd_m_per_px"):
        for key in ("focal_length_m", "sensor_width_m", "image_width_px"):
            if not has(f"camera.{key}"):
                diagnostics.append(f"camera.{key}: required to derive altitude from roi.gsd_m_per_px")
    if not (has("roi.line_spacing_m") and has("roi.capture_spacing_m")):
        for key in ("fov_h_deg", "fov_v_deg"):
            if not has(f"camera.{key}"):
                diagnostics.append(
                    f"camera.{key}: required for the footprint unless roi.line_spacing_m "
                    "and roi.capture_spacing_m are given"
                )


def load_spec(
    path: Union[str, Path], overrides: Optional[Dict[str, Any]] = None
) -> SurveySpec:
    """
    读取并校验航测任务文件

    参数：
    - path: YAML 文件路径
    - overrides: 命令行覆盖项，键为字段路径（如 "output.sample_rate_hz"）

    所有问题汇总后一次性以 SpecError 抛出
    """
    path = Path(path)
    document = _read_document(path)
    diagnostics: List[str] = []
    values = _flatten(document, diagnostics)
    for key, value in (overrides or {}).items():
        if key not in FIELDS_BY_PATH:
            diagnostics.append(f"{key}: unknown override")
        elif value is not None:
            values[key] = value
    _coerce_numbers(values)

    for spec_field in SPEC_FIELDS:
        value = values.get(spec_field.path, MISSING)
        if value is MISSING:
            if spec_field.path == "planner.u_max_mps2":
                diagnostics.append(f"{spec_field.path}: required")
            continue
        if spec_field.check is not None:
            problem = spec_field.check(value)
            if problem:
                diagnostics.append(f"{spec_field.path}: {problem}")
    u_z_min = values.get("planner.u_z_min_mps2", MISSING)
    if u_z_min not in (MISSING, None):
        problem = RangeValidator()(u_z_min)
        if problem:
            diagnostics.append(f"planner.u_z_min_mps2: {problem}")
    _check_geometry(values, diagnostics)
    if diagnostics:
        raise SpecError(diagnostics)

    def get(path_key):
        value = values.get(path_key, MISSING)
        return FIELDS_BY_PATH[path_key].default if value is MISSING else value

    def optional(path_key):
        value = get(path_key)
        return None if value is MISSING else float(value)

    camera = _camera_from(values)
    v_blur = _derive_v_blur(values, camera, diagnostics)
    params = None
    try:
        v_start, v_end = get("planner.v_start_mps"), get("planner.v_end_mps")
        u_z_min = get("planner.u_z_min_mps2")
        params = PlannerParams(
            u_max=float(get("planner.u_max_mps2")),
            v_axis_max=float(get("planner.v_axis_max_mps")),
            v_blur=v_blur,
            switching_points=int(get("planner.switching_points")),
            u_z_min=None if u_z_min is None else float(u_z_min),
            v_start=None if v_start is None else tuple(float(x) for x in v_start),
            v_end=None if v_end is None else tuple(float(x) for x in v_end),
            thrust_reserve=float(get("planner.thrust_reserve_mps2")),
            max_switching_points=int(get("planner.max_switching_points")),
        )
    except InvalidParameterError as e:
        diagnostics.append(f"planner: {e}")

    waypoints = get("roi.waypoints")
    spec = None
    if params is not None:
        spec = SurveySpec(
            roi_width_m=optional("roi.width_m"),
            roi_height_m=optional("roi.height_m"),
            overlap_fraction=float(get("roi.overlap_fraction")),
            altitude_m=optional("roi.altitude_m"),
            gsd_m_per_px=optional("roi.gsd_m_per_px"),
            line_spacing_m=optional("roi.line_spacing_m"),
            capture_spacing_m=optional("roi.capture_spacing_m"),
            waypoints=None if waypoints is MISSING else np.asarray(waypoints, dtype=float),
            allow_coincident=bool(get("roi.allow_coincident")),
            camera=camera,
            params=params,
            out_dir=Path(get("output.directory")),
            sample_rate_hz=float(get("output.sample_rate_hz")),
            plot_data=bool(get("output.plot_data")),
            smooth=bool(get("mode.smooth")),
            baseline=bool(get("mode.baseline")),
            waypoints_only=bool(get("mode.waypoints_only")),
            tolerance_profile=str(get("mode.tolerance_profile")),
            use_cache=bool(get("mode.cache")),
            source=path,
            raw=document,
        )
        # 几何参数在此一并校验，使航点生成的错误也归入字段诊断
        try:
            spec.build_plan()
        except (InvalidParameterError, InvalidPlanError) as e:
            diagnostics.append(f"roi: {e}")

    if diagnostics:
        raise SpecError(diagnostics)
    logger.info(f"Loaded survey spec {path.name}")
    return spec
