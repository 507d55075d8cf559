"""轨迹导出：采样 CSV、分段表、绘图数据"""

import json
import math
from pathlib import Path
from typing import Iterable, List, Union

import numpy as np
import pandas as pd

from app.core.entities import SurveyPlan
from app.core.trajectory.piecewise import PiecewiseTrajectory
from app.core.trajectory.smoothing import QuarticSpline

Trajectory = Union[PiecewiseTrajectory, QuarticSpline]

TRAJECTORY_COLUMNS = ["t", "x", "y", "z", "vx", "vy", "vz", "ax", "ay", "az"]
FLOAT_FORMAT = "%.9g"


def sample_times(duration: float, sample_rate_hz: float) -> np.ndarray:
    """固定采样率的时间序列，末尾补上终点时刻"""
    step = 1.0 / sample_rate_hz
    count = int(math.floor(duration / step + 1e-9)) + 1
    times = np.arange(count) * step
    times = times[times <= duration]
    if times[-1] < duration:
        times = np.append(times, duration)
    return times


def trajectory_frame(traj: Trajectory, sample_rate_hz: float) -> pd.DataFrame:
    times = sample_times(traj.duration, sample_rate_hz)
    r, v, a = traj.sample_many(times)
    return pd.DataFrame(np.column_stack([times, r, v, a]), columns=TRAJECTORY_COLUMNS)


def write_trajectory_csv(traj: Trajectory, path: Union[str, Path], sample_rate_hz: float) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    trajectory_frame(traj, sample_rate_hz).to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def segment_table(traj: PiecewiseTrajectory) -> List[dict]:
    return [
        {
            "t_start": float(traj.t_start[k]),
            "duration": float(traj.t_end[k] - traj.t_start[k]),
            "u": traj.u[k].tolist(),
        }
        for k in range(traj.n_intervals)
    ]


def _clean(value):
    """JSON 不支持 inf/nan，统一写为 null"""
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {key: _clean(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(item) for item in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, np.generic):
        return _clean(value.item())
    return value


def write_json(data, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(_clean(data), f, indent=2, ensure_ascii=False)
        f.write("\n")
    return path


def write_segment_table(traj: PiecewiseTrajectory, path: Union[str, Path]) -> Path:
    return write_json({"intervals": segment_table(traj)}, path)


def write_waypoints(plan: SurveyPlan, path: Union[str, Path]) -> Path:
    return write_json(plan.to_json(), path)


def plot_frame(method: str, traj: Trajectory, sample_rate_hz: float) -> pd.DataFrame:
    """整洁格式的绘图数据：method,t,speed,input_norm"""
    times = sample_times(traj.duration, sample_rate_hz)
    _, v, a = traj.sample_many(times)
    return pd.DataFrame(
        {
            "method": method,
            "t": times,
            "speed": np.linalg.norm(v, axis=1),
            "input_norm": np.linalg.norm(a, axis=1),
        }
    )


def waypoint_markers(traj: Trajectory, plan: SurveyPlan, waypoint_times: np.ndarray) -> pd.DataFrame:
    """航点标记：index,t,x,y,z,speed"""
    rows = []
    for index, t in enumerate(waypoint_times):
        _, v, _ = traj.sample(float(t))
        x, y, z = plan.waypoints[index]
        rows.append((index, float(t), x, y, z, float(np.linalg.norm(v))))
    return pd.DataFrame(rows, columns=["index", "t", "x", "y", "z", "speed"])


def write_frames(frames: Iterable[pd.DataFrame], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.concat(list(frames), ignore_index=True).to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path
