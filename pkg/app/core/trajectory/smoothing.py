"""
航点间四次多项式平滑

每段 r̄(T) = a_0 + a_1·T + a_2·T² + a_3·T³ + a_4·T⁴（T 为段内时间），
满足两端位置、速度以及段中点位置与原轨迹一致。
"""

from dataclasses import dataclass

import numpy as np

from app.config import EPS_TIME
from app.core.entities import NodeSolution
from app.core.errors import OutOfRangeError
from app.core.trajectory.piecewise import PiecewiseTrajectory, State

# 归一化时间 τ ∈ [0, 1] 下的插值条件：p(0), p'(0), p(1), p'(1), p(1/2)
_CONDITIONS = np.array(
    [
        [1.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0, 0.0],
        [1.0, 1.0, 1.0, 1.0, 1.0],
        [0.0, 1.0, 2.0, 3.0, 4.0],
        [1.0, 0.5, 0.25, 0.125, 0.0625],
    ]
)
_POWERS = np.arange(5)


@dataclass(frozen=True)
class QuarticSpline:
    t_start: np.ndarray  # (M,) 每段起始时刻
    durations: np.ndarray  # (M,)
    coefficients: np.ndarray  # (M, 5, 3)，a_0..a_4

    @property
    def duration(self) -> float:
        return float(self.t_start[-1] + self.durations[-1]) if len(self.t_start) else 0.0

    @property
    def t_end(self) -> np.ndarray:
        return self.t_start + self.durations

    def evaluate(self, k: int, tau: float) -> State:
        a = self.coefficients[k]
        r = (tau**_POWERS) @ a
        v = (_POWERS[1:] * tau ** (_POWERS[1:] - 1)) @ a[1:]
        acc = (_POWERS[2:] * (_POWERS[2:] - 1) * tau ** (_POWERS[2:] - 2)) @ a[2:]
        return r, v, acc

    def sample(self, t: float) -> State:
        if not 0.0 <= t <= self.duration:
            raise OutOfRangeError(f"t={t} outside [0, {self.duration}]")
        k = min(int(np.searchsorted(self.t_end, t, side="left")), len(self.t_start) - 1)
        return self.evaluate(k, t - self.t_start[k])

    def sample_many(self, times: np.ndarray) -> State:
        times = np.asarray(times, dtype=float)
        if np.any(times < 0.0) or np.any(times > self.duration):
            raise OutOfRangeError(f"sample times outside [0, {self.duration}]")
        states = [self.sample(float(t)) for t in times]
        return tuple(np.array([state[i] for state in states]) for i in range(3))


def smooth(traj: PiecewiseTrajectory, sol: NodeSolution) -> QuarticSpline:
    """对每个航点到航点的航段求解 5×5 线性方程组（三个坐标轴同时求解）"""
    nodes = sol.waypoint_node_indices
    times = traj.waypoint_times
    M = len(nodes) - 1
    coefficients = np.zeros((M, 5, 3))
    durations = np.diff(times)
    for k in range(M):
        r_a, v_a = sol.r[nodes[k]], sol.v[nodes[k]]
        r_b, v_b = sol.r[nodes[k + 1]], sol.v[nodes[k + 1]]
        delta = durations[k]
        if delta < EPS_TIME:
            coefficients[k, 0] = r_a
            coefficients[k, 1] = v_a
            continue
        r_mid, _, _ = traj.sample(times[k] + 0.5 * delta)
        rhs = np.vstack([r_a, v_a * delta, r_b, v_b * delta, r_mid])
        scaled = np.linalg.solve(_CONDITIONS, rhs)
        coefficients[k] = scaled / (delta ** _POWERS)[:, None]
    return QuarticSpline(t_start=times[:-1].copy(), durations=durations, coefficients=coefficients)
