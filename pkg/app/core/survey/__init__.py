from .camera import compute_flight_height, compute_footprint, compute_v_blur
from .lawnmower import generate_lawnmower

__all__ = [
    "compute_v_blur",
    "compute_flight_height",
    "compute_footprint",
    "generate_lawnmower",
]
