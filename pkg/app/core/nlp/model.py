"""
变步长最短时间问题的多重打靶模型

决策变量依次为：非航点节点位置、自由节点速度、输入参数、s_k（dt_k = s_k²）。
输入参数在球面等式模式下为每区间两个角度 (θ_k, φ_k)，
u_k = ū·(sinφ cosθ, sinφ sinθ, cosφ)；在放宽模式下为笛卡尔坐标 u_k。
位置以第一个航点为原点。
"""

import math
from typing import Dict, Optional, Tuple

import numpy as np

from app.core.entities import (
    ConicSolution,
    InputMode,
    NodeSolution,
    PlannerParams,
    SurveyPlan,
    node_count,
    waypoint_nodes,
)

AXES = np.arange(3)


class NodeModel:
    """目标函数、等式约束（动力学残差）与不等式约束 g(x) ≤ 0 及其雅可比矩阵"""

    def __init__(self, plan: SurveyPlan, params: PlannerParams, mode: InputMode):
        self.plan = plan
        self.params = params
        self.mode = mode
        self.S = params.switching_points
        self.n_nodes = node_count(plan.n_waypoints, self.S)
        self.K = self.n_nodes - 1
        self.origin = plan.waypoints[0].copy()
        self.u_bar = params.u_plan
        self.wp_nodes = waypoint_nodes(plan.n_waypoints, self.S)

        self.fixed_r = np.zeros((self.n_nodes, 3))
        for n, j in enumerate(self.wp_nodes):
            self.fixed_r[j] = plan.waypoints[n] - self.origin
        self.fixed_v = np.zeros((self.n_nodes, 3))
        fixed_v_nodes = set()
        if params.v_start is not None:
            self.fixed_v[0] = params.v_start
            fixed_v_nodes.add(0)
        if params.v_end is not None:
            self.fixed_v[-1] = params.v_end
            fixed_v_nodes.add(self.n_nodes - 1)

        # 列编号，-1 表示固定
        column = 0
        self.r_col = np.full(self.n_nodes, -1)
        wp_set = set(int(j) for j in self.wp_nodes)
        for j in range(self.n_nodes):
            if j not in wp_set:
                self.r_col[j] = column
                column += 3
        self.v_col = np.full(self.n_nodes, -1)
        for j in range(self.n_nodes):
            if j not in fixed_v_nodes:
                self.v_col[j] = column
                column += 3
        self.n_input = 2 if mode == InputMode.SPHERE_EQUALITY else 3
        self.input_col = column + self.n_input * np.arange(self.K)
        column += self.n_input * self.K
        self.s_col = column + np.arange(self.K)
        column += self.K
        self.n = column

        self._build_inequality_layout()
        self._jac_eq_const = self._constant_equality_jacobian()

    # ---------- 变量打包 ----------

    @property
    def n_equalities(self) -> int:
        return 6 * self.K

    @property
    def n_inequalities(self) -> int:
        return self._n_ineq

    def inputs(self, x: np.ndarray) -> np.ndarray:
        """每区间的输入向量 u_k，形状 (K, 3)"""
        params = x[self.input_col[:, None] + np.arange(self.n_input)]
        if self.mode == InputMode.RELAXED_INEQUALITY:
            return params
        theta, phi = params[:, 0], params[:, 1]
        return self.u_bar * np.column_stack(
            [np.sin(phi) * np.cos(theta), np.sin(phi) * np.sin(theta), np.cos(phi)]
        )

    def input_derivatives(self, x: np.ndarray) -> np.ndarray:
        """∂u_k/∂(输入参数)，形状 (K, 3, n_input)"""
        if self.mode == InputMode.RELAXED_INEQUALITY:
            return np.broadcast_to(np.eye(3), (self.K, 3, 3))
        theta = x[self.input_col]
        phi = x[self.input_col + 1]
        st, ct, sp, cp = np.sin(theta), np.cos(theta), np.sin(phi), np.cos(phi)
        d_theta = np.column_stack([-sp * st, sp * ct, np.zeros_like(st)])
        d_phi = np.column_stack([cp * ct, cp * st, -sp])
        return self.u_bar * np.stack([d_theta, d_phi], axis=2)

    def unpack(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """返回 (dt, u, v, r)，位置为相对原点坐标"""
        r = self.fixed_r.copy()
        free = self.r_col >= 0
        r[free] = x[self.r_col[free][:, None] + AXES]
        v = self.fixed_v.copy()
        free = self.v_col >= 0
        v[free] = x[self.v_col[free][:, None] + AXES]
        s = x[self.s_col]
        return s**2, self.inputs(x), v, r

    def pack(self, dt, u, v, r) -> np.ndarray:
        """由逐区间、逐节点数组构造决策向量（r 为绝对坐标）"""
        x = np.zeros(self.n)
        r = np.asarray(r, dtype=float) - self.origin
        free = self.r_col >= 0
        x[self.r_col[free][:, None] + AXES] = r[free]
        free = self.v_col >= 0
        x[self.v_col[free][:, None] + AXES] = np.asarray(v, dtype=float)[free]
        x[self.s_col] = np.sqrt(np.maximum(np.asarray(dt, dtype=float), 0.0))
        u = np.asarray(u, dtype=float)
        if self.mode == InputMode.RELAXED_INEQUALITY:
            x[self.input_col[:, None] + AXES] = u
        else:
            x[self.input_col] = np.arctan2(u[:, 1], u[:, 0])
            x[self.input_col + 1] = np.arctan2(np.hypot(u[:, 0], u[:, 1]), u[:, 2])
        return x

    def warm_start(self, warm: ConicSolution) -> np.ndarray:
        """把凸松弛的解转换为初始点；幅值过小的输入取所在航段的弦方向"""
        u = np.array(warm.u, dtype=float)
        if self.mode == InputMode.SPHERE_EQUALITY:
            norms = np.linalg.norm(u, axis=1)
            weak = norms < 1e-6 * self.u_bar
            if np.any(weak):
                chords = np.diff(self.plan.waypoints, axis=0)
                per_segment = self.S + 1
                for k in np.flatnonzero(weak):
                    chord = chords[k // per_segment]
                    length = np.linalg.norm(chord)
                    direction = chord / length if length > 0 else np.array([1.0, 0.0, 0.0])
                    u[k] = direction if (k % per_segment) < per_segment / 2 else -direction
        dt = np.full(self.K, warm.dt)
        return self.pack(dt, u, warm.v, warm.r)

    def to_solution(self, x: np.ndarray) -> NodeSolution:
        dt, u, v, r = self.unpack(x)
        return NodeSolution(
            dt=dt,
            u=u,
            v=v,
            r=r + self.origin,
            mode=self.mode,
            switching_points=self.S,
        )

    # ---------- 目标函数 ----------

    def objective(self, x: np.ndarray) -> float:
        """总时间 Σ s_k²"""
        return float(np.sum(x[self.s_col] ** 2))

    def objective_gradient(self, x: np.ndarray) -> np.ndarray:
        grad = np.zeros(self.n)
        grad[self.s_col] = 2.0 * x[self.s_col]
        return grad

    # ---------- 等式约束 ----------

    def equality(self, x: np.ndarray) -> np.ndarray:
        """每区间 6 个动力学残差：位置 3 个、速度 3 个"""
        dt, u, v, r = self.unpack(x)
        dt_col = dt[:, None]
        e_r = r[1:] - r[:-1] - v[:-1] * dt_col - 0.5 * u * dt_col**2
        e_v = v[1:] - v[:-1] - u * dt_col
        return np.hstack([e_r, e_v]).reshape(-1)

    def _constant_equality_jacobian(self) -> np.ndarray:
        J = np.zeros((self.n_equalities, self.n))
        for k in range(self.K):
            pos_rows = 6 * k + AXES
            vel_rows = pos_rows + 3
            if self.r_col[k + 1] >= 0:
                J[pos_rows, self.r_col[k + 1] + AXES] = 1.0
            if self.r_col[k] >= 0:
                J[pos_rows, self.r_col[k] + AXES] = -1.0
            if self.v_col[k + 1] >= 0:
                J[vel_rows, self.v_col[k + 1] + AXES] = 1.0
            if self.v_col[k] >= 0:
                J[vel_rows, self.v_col[k] + AXES] = -1.0
        return J

    def equality_jacobian(self, x: np.ndarray) -> np.ndarray:
        dt, u, v, _ = self.unpack(x)
        s = x[self.s_col]
        du = self.input_derivatives(x)
        J = self._jac_eq_const.copy()
        ks = np.arange(self.K)
        free_v = self.v_col[:-1] >= 0
        for a in range(3):
            pos_rows = 6 * ks + a
            vel_rows = pos_rows + 3
            J[pos_rows[free_v], self.v_col[:-1][free_v] + a] = -dt[free_v]
            J[pos_rows, self.s_col] = -(v[:-1, a] + u[:, a] * dt) * 2.0 * s
            J[vel_rows, self.s_col] = -u[:, a] * 2.0 * s
            for i in range(self.n_input):
                J[pos_rows, self.input_col + i] = -0.5 * dt**2 * du[:, a, i]
                J[vel_rows, self.input_col + i] = -dt * du[:, a, i]
        return J

    # ---------- 不等式约束 g(x) ≤ 0 ----------

    def _build_inequality_layout(self):
        params = self.params
        self.box_nodes = np.flatnonzero(self.v_col >= 0) if math.isfinite(params.v_axis_max) else np.array([], dtype=int)
        blur = params.waypoint_speed_bound
        self.blur_bound = blur
        if math.isfinite(blur):
            self.blur_nodes = np.array([j for j in self.wp_nodes if self.v_col[j] >= 0], dtype=int)
        else:
            self.blur_nodes = np.array([], dtype=int)
        self.uz_rows = params.u_z_min is not None
        self.cone_rows = self.mode == InputMode.RELAXED_INEQUALITY

        sizes = {
            "box": 6 * len(self.box_nodes),
            "blur": len(self.blur_nodes),
            "u_z_min": self.K if self.uz_rows else 0,
            "input_cone": self.K if self.cone_rows else 0,
        }
        self.ineq_slices: Dict[str, slice] = {}
        start = 0
        for name, size in sizes.items():
            self.ineq_slices[name] = slice(start, start + size)
            start += size
        self._n_ineq = start

    def inequality(self, x: np.ndarray) -> np.ndarray:
        _, u, v, _ = self.unpack(x)
        g = np.zeros(self._n_ineq)
        if len(self.box_nodes):
            vb = v[self.box_nodes]
            g[self.ineq_slices["box"]] = np.hstack(
                [vb - self.params.v_axis_max, -vb - self.params.v_axis_max]
            ).reshape(-1)
        if len(self.blur_nodes):
            speed_sq = np.sum(v[self.blur_nodes] ** 2, axis=1)
            g[self.ineq_slices["blur"]] = (speed_sq - self.blur_bound**2) / (2.0 * self.blur_bound)
        if self.uz_rows:
            g[self.ineq_slices["u_z_min"]] = self.params.u_z_min - u[:, 2]
        if self.cone_rows:
            g[self.ineq_slices["input_cone"]] = (np.sum(u**2, axis=1) - self.u_bar**2) / (2.0 * self.u_bar)
        return g

    def inequality_jacobian(self, x: np.ndarray) -> np.ndarray:
        _, u, v, _ = self.unpack(x)
        J = np.zeros((self._n_ineq, self.n))
        if len(self.box_nodes):
            start = self.ineq_slices["box"].start
            for i, j in enumerate(self.box_nodes):
                rows = start + 6 * i + AXES
                J[rows, self.v_col[j] + AXES] = 1.0
                J[rows + 3, self.v_col[j] + AXES] = -1.0
        if len(self.blur_nodes):
            start = self.ineq_slices["blur"].start
            for i, j in enumerate(self.blur_nodes):
                J[start + i, self.v_col[j] + AXES] = v[j] / self.blur_bound
        if self.uz_rows or self.cone_rows:
            du = self.input_derivatives(x)
            ks = np.arange(self.K)
            if self.uz_rows:
                rows = self.ineq_slices["u_z_min"].start + ks
                for i in range(self.n_input):
                    J[rows, self.input_col + i] = -du[:, 2, i]
            if self.cone_rows:
                rows = self.ineq_slices["input_cone"].start + ks
                for i in range(self.n_input):
                    J[rows, self.input_col + i] = np.einsum("ka,ka->k", u, du[:, :, i]) / self.u_bar
        return J

    def inequality_family(self, index: int) -> Optional[str]:
        for name, sl in self.ineq_slices.items():
            if sl.start <= index < sl.stop:
                return name
        return None
