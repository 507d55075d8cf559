"""相机几何：模糊速度上限、航高与地面覆盖范围"""

import math
from typing import Tuple

from app.core.entities import CameraSpec
from app.core.errors import InvalidParameterError


def compute_v_blur(camera: CameraSpec) -> float:
    """
    允许的最大像素模糊对应的飞行速度上限 ρ / (G_x · T_s)

    参数：
    - camera: 需提供 allowable_blur_px、ground_resolution_px_per_m、shutter_s
    """
    camera.require("allowable_blur_px", "ground_resolution_px_per_m", "shutter_s")
    return camera.allowable_blur_px / (
        camera.ground_resolution_px_per_m * camera.shutter_s
    )


def compute_flight_height(gsd_m_per_px: float, camera: CameraSpec) -> float:
    """根据地面采样距离计算航高（针孔模型）H = GSD · f · 像素宽度 / 传感器宽度"""
    if not gsd_m_per_px > 0:
        raise InvalidParameterError(f"gsd must be > 0, got {gsd_m_per_px}")
    camera.require("focal_length_m", "image_width_px", "sensor_width_m")
    return (
        gsd_m_per_px
        * camera.focal_length_m
        * camera.image_width_px
        / camera.sensor_width_m
    )


def compute_footprint(altitude_m: float, camera: CameraSpec) -> Tuple[float, float]:
    """单张影像在地面的覆盖范围 (width_m, height_m)"""
    if not altitude_m > 0:
        raise InvalidParameterError(f"altitude must be > 0, got {altitude_m}")
    camera.require("fov_h_rad", "fov_v_rad")
    width = 2.0 * altitude_m * math.tan(camera.fov_h_rad / 2.0)
    height = 2.0 * altitude_m * math.tan(camera.fov_v_rad / 2.0)
    return width, height
