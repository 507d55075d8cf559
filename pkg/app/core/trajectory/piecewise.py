"""分段常加速度轨迹：由节点解做闭式积分，并在任意时刻采样"""

from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional, Tuple, Union

import numpy as np

from app.config import EPS_FEAS
from app.core.entities import NodeSolution, PlannerParams, SurveyPlan
from app.core.errors import OutOfRangeError, StaleSolutionError
from app.core.nlp.residuals import evaluate_residuals

if TYPE_CHECKING:
    from app.core.trajectory.smoothing import QuarticSpline

State = Tuple[np.ndarray, np.ndarray, np.ndarray]


@dataclass(frozen=True)
class PiecewiseTrajectory:
    """每个区间记录 {t_start, t_end, r_start, v_start, u}，区间首尾相接"""

    t_start: np.ndarray  # (K,)
    t_end: np.ndarray  # (K,)
    r_start: np.ndarray  # (K, 3)
    v_start: np.ndarray  # (K, 3)
    u: np.ndarray  # (K, 3)
    r_end: np.ndarray  # (K, 3) 区间终点的节点状态
    v_end: np.ndarray  # (K, 3)
    waypoint_times: np.ndarray  # (N,)

    @property
    def duration(self) -> float:
        return float(self.t_end[-1]) if len(self.t_end) else 0.0

    @property
    def n_intervals(self) -> int:
        return len(self.t_start)

    def _locate(self, t: float) -> int:
        # 左区间优先：t 恰好落在边界上时取前一个区间
        k = int(np.searchsorted(self.t_end, t, side="left"))
        return min(k, self.n_intervals - 1)

    def sample(self, t: float) -> State:
        if not 0.0 <= t <= self.duration:
            raise OutOfRangeError(f"t={t} outside [0, {self.duration}]")
        k = self._locate(t)
        if t == self.t_end[k]:
            return self.r_end[k].copy(), self.v_end[k].copy(), self.u[k].copy()
        tau = t - self.t_start[k]
        r = self.r_start[k] + self.v_start[k] * tau + 0.5 * self.u[k] * tau**2
        v = self.v_start[k] + self.u[k] * tau
        return r, v, self.u[k].copy()

    def sample_many(self, times: np.ndarray) -> State:
        times = np.asarray(times, dtype=float)
        if np.any(times < 0.0) or np.any(times > self.duration):
            raise OutOfRangeError(f"sample times outside [0, {self.duration}]")
        k = np.minimum(np.searchsorted(self.t_end, times, side="left"), self.n_intervals - 1)
        tau = (times - self.t_start[k])[:, None]
        r = self.r_start[k] + self.v_start[k] * tau + 0.5 * self.u[k] * tau**2
        v = self.v_start[k] + self.u[k] * tau
        at_end = times == self.t_end[k]
        r[at_end] = self.r_end[k[at_end]]
        v[at_end] = self.v_end[k[at_end]]
        return r, v, self.u[k].copy()

    def translated(self, offset) -> "PiecewiseTrajectory":
        offset = np.asarray(offset, dtype=float)
        return PiecewiseTrajectory(
            t_start=self.t_start,
            t_end=self.t_end,
            r_start=self.r_start + offset,
            v_start=self.v_start,
            u=self.u,
            r_end=self.r_end + offset,
            v_end=self.v_end,
            waypoint_times=self.waypoint_times,
        )

    @classmethod
    def from_schedule(
        cls,
        dt: np.ndarray,
        u: np.ndarray,
        r0: np.ndarray,
        v0: np.ndarray,
        waypoint_times: Optional[np.ndarray] = None,
    ) -> "PiecewiseTrajectory":
        """从初始状态出发，按逐区间 (dt, u) 做闭式积分"""
        dt = np.asarray(dt, dtype=float)
        u = np.asarray(u, dtype=float).reshape(-1, 3)
        K = len(dt)
        r_start = np.zeros((K, 3))
        v_start = np.zeros((K, 3))
        r_end = np.zeros((K, 3))
        v_end = np.zeros((K, 3))
        r, v = np.asarray(r0, dtype=float), np.asarray(v0, dtype=float)
        for k in range(K):
            r_start[k], v_start[k] = r, v
            r = r + v * dt[k] + 0.5 * u[k] * dt[k] ** 2
            v = v + u[k] * dt[k]
            r_end[k], v_end[k] = r, v
        times = np.concatenate([[0.0], np.cumsum(dt)])
        return cls(
            t_start=times[:-1],
            t_end=times[1:],
            r_start=r_start,
            v_start=v_start,
            u=u,
            r_end=r_end,
            v_end=v_end,
            waypoint_times=(
                np.array([0.0, times[-1]]) if waypoint_times is None else np.asarray(waypoint_times, dtype=float)
            ),
        )


def interpolate(
    sol: NodeSolution,
    plan: Optional[SurveyPlan] = None,
    params: Optional[PlannerParams] = None,
    tol: float = EPS_FEAS,
) -> PiecewiseTrajectory:
    """
    由节点解构造连续轨迹 r(t) = r_k + v_k·t + u_k·t²/2

    给定 plan 与 params 时做完整的约束检查，否则只检查动力学残差；
    超过 tol 时抛出 StaleSolutionError。
    """
    if plan is not None and params is not None:
        residuals = evaluate_residuals(sol, plan, params)
        violated = residuals.violated(tol)
        if violated:
            raise StaleSolutionError(
                f"solution residuals exceed {tol:g}: "
                + ", ".join(f"{name}={residuals.families[name]:.3e}" for name in violated)
            )
    else:
        dt_col = sol.dt[:, None]
        e_r = sol.r[1:] - sol.r[:-1] - sol.v[:-1] * dt_col - 0.5 * sol.u * dt_col**2
        e_v = sol.v[1:] - sol.v[:-1] - sol.u * dt_col
        defect = max(float(np.max(np.abs(e_r), initial=0.0)), float(np.max(np.abs(e_v), initial=0.0)))
        if defect > tol or np.any(sol.dt < 0):
            raise StaleSolutionError(f"dynamics defect {defect:.3e} exceeds {tol:g}")

    times = np.concatenate([[0.0], np.cumsum(sol.dt)])
    return PiecewiseTrajectory(
        t_start=times[:-1],
        t_end=times[1:],
        r_start=np.array(sol.r[:-1]),
        v_start=np.array(sol.v[:-1]),
        u=np.array(sol.u),
        r_end=np.array(sol.r[1:]),
        v_end=np.array(sol.v[1:]),
        waypoint_times=times[sol.waypoint_node_indices],
    )


def sample(traj: Union[PiecewiseTrajectory, "QuarticSpline"], t: float) -> State:
    """在时刻 t 采样 (r, v, a)；边界处取左侧区间"""
    return traj.sample(t)
