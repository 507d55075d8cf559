import math
from typing import Optional

import numpy as np

from app.core.entities import CameraSpec, SurveyPlan
from app.core.errors import InvalidParameterError
from app.core.survey.camera import compute_footprint
from app.core.utils.logger import setup_logger

logger = setup_logger("lawnmower")


def _stations(length: float, spacing: float) -> np.ndarray:
    """沿一条边等间距布点，最后一个点落在边界上（至少两个点）"""
    count = max(math.ceil(length / spacing - 1e-9), 1)
    stations = np.arange(count + 1, dtype=float) * spacing
    stations[-1] = length
    return stations


def generate_lawnmower(
    roi_width_m: float,
    roi_height_m: float,
    altitude_m: float,
    overlap_fraction: float = 0.0,
    camera: Optional[CameraSpec] = None,
    line_spacing_m: Optional[float] = None,
    capture_spacing_m: Optional[float] = None,
) -> SurveyPlan:
    """
    生成蛇形（往返）航线的航点

    航线平行于 ROI 的长边，从坐标最小的角点开始。给定 line_spacing_m 与
    capture_spacing_m 时不使用相机参数。

    参数：
    - roi_width_m: ROI 沿 x 方向的尺寸
    - roi_height_m: ROI 沿 y 方向的尺寸
    - altitude_m: 航高，所有航点的 z
    - overlap_fraction: 影像重叠率 [0, 1)
    - camera: 用于计算地面覆盖范围
    """
    if roi_width_m < 0 or roi_height_m < 0:
        raise InvalidParameterError(
            f"roi dimensions must be >= 0, got {roi_width_m} x {roi_height_m}"
        )
    if not 0.0 <= overlap_fraction < 1.0:
        raise InvalidParameterError(
            f"overlap_fraction must lie in [0, 1), got {overlap_fraction}"
        )

    if line_spacing_m is None or capture_spacing_m is None:
        if camera is None:
            raise InvalidParameterError(
                "either a camera or explicit line/capture spacing is required"
            )
        footprint_w, footprint_h = compute_footprint(altitude_m, camera)
        line_spacing_m = footprint_h * (1.0 - overlap_fraction)
        capture_spacing_m = footprint_w * (1.0 - overlap_fraction)
        cross_extent = footprint_h
    else:
        cross_extent = line_spacing_m
    if not line_spacing_m > 0 or not capture_spacing_m > 0:
        raise InvalidParameterError(
            f"spacing must be > 0, got line={line_spacing_m}, capture={capture_spacing_m}"
        )

    along_x = roi_width_m >= roi_height_m
    long_side, short_side = (
        (roi_width_m, roi_height_m) if along_x else (roi_height_m, roi_width_m)
    )

    if short_side <= cross_extent:
        lines = np.array([short_side / 2.0])
    else:
        lines = _stations(short_side, line_spacing_m)
    points = _stations(long_side, capture_spacing_m)

    waypoints = []
    for row, offset in enumerate(lines):
        ordered = points if row % 2 == 0 else points[::-1]
        for station in ordered:
            x, y = (station, offset) if along_x else (offset, station)
            waypoints.append((x, y, altitude_m))

    degenerate = long_side == 0.0
    if degenerate:
        logger.warning("ROI has zero area; emitting two coincident waypoints")

    logger.debug(
        f"lawnmower: {len(lines)} lines x {len(points)} points, "
        f"line spacing {line_spacing_m:.3f} m, capture spacing {capture_spacing_m:.3f} m"
    )
    return SurveyPlan(
        waypoints=np.array(waypoints),
        altitude_m=altitude_m,
        line_spacing_m=line_spacing_m,
        capture_spacing_m=capture_spacing_m,
        allow_coincident=degenerate,
    )
