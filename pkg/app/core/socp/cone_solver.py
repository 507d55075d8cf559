"""
稠密原始-对偶内点法，求解二阶锥规划

    min  cᵀx
    s.t. Ax = b
         Gx + s = h,  s ∈ K

K 由非负象限 R^l_+ 与若干二阶锥 Q^{q_i} = {(t, w) | ‖w‖ ≤ t} 组成。
先用 A 的零空间基 N 消去等式约束（x = x_p + Nξ），再对 ξ 采用齐次自对偶嵌入、
Nesterov-Todd 缩放与 Mehrotra 预测-校正步。
每次迭代的 Newton 方程 (W⁻¹GN)ᵀ(W⁻¹GN)·dξ = r 通过 QR 分解求解，不显式构造法方程。
"""

import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence

import numpy as np
import scipy.linalg

from app.config import EPS_GAP, SOCP_FEASTOL
from app.core.entities import SolveStatus
from app.core.utils.logger import setup_logger

logger = setup_logger("cone_solver")

STEP_FRACTION = 0.99
MAX_ITERATIONS = 100
MAX_BACKTRACKS = 40
ABS_GAP_TOL = 1e-8
STATIC_REGULARIZATION = 1e-12
REFINEMENT_STEPS = 2
# 迭代点到锥边界的最小相对距离
INTERIOR_MARGIN = 1e-13
# 数值停滞时仍可接受的精度
ACCEPT_FEASTOL = 1e-7
ACCEPT_RELTOL = EPS_GAP


@dataclass(frozen=True)
class ConeDims:
    """锥的维度：象限部分长度 l 与各二阶锥的维度 q"""

    l: int = 0
    q: Sequence[int] = field(default_factory=tuple)

    @property
    def size(self) -> int:
        return self.l + int(sum(self.q))

    @property
    def degree(self) -> int:
        return self.l + len(self.q)

    def soc_slices(self) -> List[slice]:
        slices, start = [], self.l
        for size in self.q:
            slices.append(slice(start, start + size))
            start += size
        return slices


@dataclass
class ConicResult:
    status: SolveStatus
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    s: np.ndarray
    objective: float
    iterations: int
    primal_residual: float
    dual_residual: float
    gap: float
    message: str = ""


class _Measure(NamedTuple):
    pres: float
    dres: float
    pcost: float
    dcost: float
    gap: float
    relgap: float


def _sqrt_det(v: np.ndarray) -> float:
    """√(v0² − ‖v1‖²)，按 (v0 − ‖v1‖)(v0 + ‖v1‖) 计算以减小抵消误差"""
    tail = float(np.linalg.norm(v[1:]))
    return math.sqrt(max((v[0] - tail) * (v[0] + tail), 0.0))


def _is_interior(dims: ConeDims, v: np.ndarray) -> bool:
    if not np.all(np.isfinite(v)):
        return False
    if dims.l and not np.all(v[: dims.l] > 0):
        return False
    for sl in dims.soc_slices():
        head = v[sl.start]
        if not head - np.linalg.norm(v[sl][1:]) > INTERIOR_MARGIN * head:
            return False
    return True


class _Scaling:
    """NT 缩放矩阵 W（对称），满足 λ = W z = W⁻¹ s"""

    def __init__(self, dims: ConeDims, s: np.ndarray, z: np.ndarray):
        self.dims = dims
        self.slices = dims.soc_slices()
        l = dims.l
        self.orthant = np.sqrt(s[:l] / z[:l])
        self.soc = []
        # λ 在每个二阶锥上的 det(λ) = √det(s)·√det(z)
        self.lam_det = []
        for sl in self.slices:
            s_k, z_k = s[sl], z[sl]
            s_det = _sqrt_det(s_k)
            z_det = _sqrt_det(z_k)
            if not (s_det > 0 and z_det > 0):
                raise FloatingPointError("iterate reached the cone boundary")
            s_bar = s_k / s_det
            z_bar = z_k / z_det
            gamma = math.sqrt((1.0 + z_bar @ s_bar) / 2.0)
            w_bar = s_bar.copy()
            w_bar[0] += z_bar[0]
            w_bar[1:] -= z_bar[1:]
            w_bar /= 2.0 * gamma
            eta = math.sqrt(s_det / z_det)
            self.soc.append((eta, w_bar))
            self.lam_det.append(s_det * z_det)
        self.lam = self.apply(z)

    def apply(self, v: np.ndarray, inverse: bool = False) -> np.ndarray:
        """计算 W·v（inverse=True 时为 W⁻¹·v），v 可以是向量或按行排列的矩阵"""
        out = np.empty_like(v)
        l = self.dims.l
        if inverse:
            out[:l] = (v[:l].T / self.orthant).T
        else:
            out[:l] = (v[:l].T * self.orthant).T
        sign = -1.0 if inverse else 1.0
        for sl, (eta, w_bar) in zip(self.slices, self.soc):
            v0, v1 = v[sl][0], v[sl][1:]
            w0, w1 = w_bar[0], w_bar[1:]
            dot = w1 @ v1
            head = w0 * v0 + sign * dot
            tail = v1 + np.multiply.outer(w1, sign * v0 + dot / (1.0 + w0))
            scale = 1.0 / eta if inverse else eta
            out[sl][0] = scale * head
            out[sl][1:] = scale * tail
        return out

    def divide(self, d: np.ndarray) -> np.ndarray:
        """求解 λ∘x = d"""
        out = np.empty_like(d)
        l = self.dims.l
        out[:l] = d[:l] / self.lam[:l]
        for sl, det in zip(self.slices, self.lam_det):
            lam_k, d_k = self.lam[sl], d[sl]
            x0 = (lam_k[0] * d_k[0] - lam_k[1:] @ d_k[1:]) / det
            out[sl][0] = x0
            out[sl][1:] = (d_k[1:] - x0 * lam_k[1:]) / lam_k[0]
        return out


def _jordan_product(dims: ConeDims, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    out = np.empty_like(u)
    l = dims.l
    out[:l] = u[:l] * v[:l]
    for sl in dims.soc_slices():
        u_k, v_k = u[sl], v[sl]
        out[sl][0] = u_k @ v_k
        out[sl][1:] = u_k[0] * v_k[1:] + v_k[0] * u_k[1:]
    return out


def _identity(dims: ConeDims) -> np.ndarray:
    e = np.zeros(dims.size)
    e[: dims.l] = 1.0
    for sl in dims.soc_slices():
        e[sl.start] = 1.0
    return e


def _max_step(dims: ConeDims, x: np.ndarray, dx: np.ndarray) -> float:
    """x + α·dx 保持在锥内的最大 α"""
    alpha = math.inf
    l = dims.l
    negative = dx[:l] < 0
    if np.any(negative):
        alpha = min(alpha, float(np.min(-x[:l][negative] / dx[:l][negative])))
    for sl in dims.soc_slices():
        x_k, d_k = x[sl], dx[sl]
        a = d_k[0] ** 2 - d_k[1:] @ d_k[1:]
        b = x_k[0] * d_k[0] - x_k[1:] @ d_k[1:]
        c = _sqrt_det(x_k) ** 2
        # f(α) = aα² + 2bα + c，取最小正根
        if abs(a) < 1e-14 * max(1.0, abs(b), c):
            if b < 0:
                alpha = min(alpha, -c / (2.0 * b))
            continue
        disc = b * b - a * c
        if disc < 0:
            continue
        root = math.sqrt(disc)
        q = -(b + math.copysign(root, b))
        candidates = [q / a] if q != 0 else []
        if q != 0:
            candidates.append(c / q)
        positive = [r for r in candidates if r > 0]
        if positive:
            alpha = min(alpha, min(positive))
        elif d_k[0] < 0:
            alpha = min(alpha, x_k[0] / -d_k[0])
    return alpha


def _cone_shift(dims: ConeDims, v: np.ndarray) -> np.ndarray:
    """把向量平移到锥的内部"""
    depth = -math.inf
    if dims.l:
        depth = max(depth, float(-np.min(v[: dims.l])))
    for sl in dims.soc_slices():
        depth = max(depth, float(np.linalg.norm(v[sl][1:]) - v[sl][0]))
    if depth < 0:
        return v.copy()
    return v + (1.0 + depth) * _identity(dims)


class ConeSolver:
    """
    二阶锥规划的齐次自对偶内点法求解器

    参数：
    - c, A, b, G, h: 问题数据（稠密矩阵）
    - dims: 锥的维度
    - feastol: 相对可行性容差
    - reltol: 相对对偶间隙容差
    - max_iter: 最大迭代次数
    """

    def __init__(
        self,
        c: np.ndarray,
        A: np.ndarray,
        b: np.ndarray,
        G: np.ndarray,
        h: np.ndarray,
        dims: ConeDims,
        feastol: float = SOCP_FEASTOL,
        reltol: float = EPS_GAP * 0.1,
        max_iter: int = MAX_ITERATIONS,
    ):
        self.c = np.asarray(c, dtype=float)
        self.A = np.asarray(A, dtype=float).reshape(-1, len(self.c))
        self.b = np.asarray(b, dtype=float).reshape(-1)
        self.G = np.asarray(G, dtype=float).reshape(-1, len(self.c))
        self.h = np.asarray(h, dtype=float).reshape(-1)
        self.dims = dims
        self.feastol = feastol
        self.reltol = reltol
        self.max_iter = max_iter
        if self.G.shape[0] != dims.size:
            raise ValueError(
                f"G has {self.G.shape[0]} rows but the cone has dimension {dims.size}"
            )
        self.n = len(self.c)
        self.p = len(self.b)
        self._primal_scale = 1.0 + max(
            float(np.max(np.abs(self.b), initial=0.0)),
            float(np.max(np.abs(self.h), initial=0.0)),
        )
        self._dual_scale = 1.0 + float(np.max(np.abs(self.c), initial=0.0))
        self._eliminate_equalities()

    # ---------- 消去等式约束 ----------

    def _eliminate_equalities(self):
        """x = x_p + Nξ，N 为 A 零空间的正交基"""
        if self.p:
            self.x_p = scipy.linalg.lstsq(self.A, self.b, check_finite=False)[0]
            self.N = scipy.linalg.null_space(self.A)
            mismatch = float(np.max(np.abs(self.A @ self.x_p - self.b)))
            self.consistent = mismatch <= 1e-9 * (1.0 + float(np.max(np.abs(self.b))))
        else:
            self.x_p = np.zeros(self.n)
            self.N = np.eye(self.n)
            self.consistent = True
        self.m = self.N.shape[1]
        self.G_r = self.G @ self.N
        self.h_r = self.h - self.G @ self.x_p
        self.c_r = self.N.T @ self.c
        self.offset = float(self.c @ self.x_p)

    # ---------- 线性系统 ----------

    def _factor(self, scaling: Optional[_Scaling]):
        """
        返回求解 Gᵀdz = r1, G·dξ − W²dz = r3 的函数（G 为消元后的矩阵）

        对 M = W⁻¹G 做 QR 分解；按列范数加微小正则，再用原矩阵做迭代修正。
        """
        M = self.G_r if scaling is None else scaling.apply(self.G_r, inverse=True)
        scale = np.maximum(np.linalg.norm(M, axis=0), 1.0)
        stacked = np.vstack([M, np.diag(math.sqrt(STATIC_REGULARIZATION) * scale)])
        R = scipy.linalg.qr(stacked, mode="economic", check_finite=False)[1]

        def normal_solve(rhs):
            step = scipy.linalg.solve_triangular(
                R, scipy.linalg.solve_triangular(R, rhs, trans="T", check_finite=False),
                check_finite=False,
            )
            for _ in range(REFINEMENT_STEPS):
                residual = rhs - M.T @ (M @ step)
                step = step + scipy.linalg.solve_triangular(
                    R, scipy.linalg.solve_triangular(R, residual, trans="T", check_finite=False),
                    check_finite=False,
                )
            return step

        def solve(r1, r3):
            w3 = r3 if scaling is None else scaling.apply(r3, inverse=True)
            dxi = normal_solve(r1 + M.T @ w3)
            q = M @ dxi - w3
            dz = q if scaling is None else scaling.apply(q, inverse=True)
            if not (np.all(np.isfinite(dxi)) and np.all(np.isfinite(dz))):
                raise FloatingPointError("non-finite Newton direction")
            return dxi, dz

        return solve

    # ---------- 主循环 ----------

    def _measure(self, xi, s, z, tau, kappa) -> _Measure:
        rx = self.G_r.T @ z + self.c_r * tau
        rz = self.h_r * tau - self.G_r @ xi - s
        pres = float(np.max(np.abs(rz), initial=0.0)) / tau / self._primal_scale
        dres = float(np.max(np.abs(rx), initial=0.0)) / tau / self._dual_scale
        pcost = float(self.c_r @ xi) / tau + self.offset
        dcost = -float(self.h_r @ z) / tau + self.offset
        gap = float(s @ z) / tau**2
        scale = max(abs(pcost), abs(dcost))
        relgap = gap / scale if scale > 1e-12 else math.inf
        return _Measure(pres, dres, pcost, dcost, gap, relgap)

    def _converged(self, measure: _Measure, feastol: float, reltol: float, abs_gap: float) -> bool:
        return (
            measure.pres <= feastol
            and measure.dres <= feastol
            and (measure.gap <= abs_gap or measure.relgap <= reltol)
        )

    def _result(self, status, xi, s, z, tau, iterations, measure: Optional[_Measure], message) -> ConicResult:
        x = self.x_p + self.N @ (xi / tau)
        z_out = z / tau
        y = np.zeros(self.p)
        if self.p:
            y = scipy.linalg.lstsq(self.A.T, -(self.c + self.G.T @ z_out), check_finite=False)[0]
        return ConicResult(
            status=status,
            x=x,
            y=y,
            z=z_out,
            s=s / tau,
            objective=float(self.c @ x),
            iterations=iterations,
            primal_residual=math.inf if measure is None else measure.pres,
            dual_residual=math.inf if measure is None else measure.dres,
            gap=math.inf if measure is None else measure.gap,
            message=message,
        )

    def _solve_fixed(self) -> ConicResult:
        """等式约束已确定 x 时只检查锥约束"""
        s = self.h - self.G @ self.x_p
        shifted = s + self.feastol * self._primal_scale * _identity(self.dims)
        inside = _is_interior(self.dims, shifted)
        status = SolveStatus.OPTIMAL if inside else SolveStatus.INFEASIBLE
        z = np.zeros(self.dims.size)
        return self._result(status, np.zeros(0), s, z, 1.0, 0, None, "solution fixed by equalities")

    def solve(self) -> ConicResult:
        dims = self.dims
        if not self.consistent:
            return self._result(
                SolveStatus.INFEASIBLE, np.zeros(self.m), np.zeros(dims.size), np.zeros(dims.size),
                1.0, 0, None, "inconsistent equality constraints",
            )
        if self.m == 0:
            return self._solve_fixed()

        c, G, h = self.c_r, self.G_r, self.h_r
        e = _identity(dims)
        m_degree = dims.degree

        # 初始点
        solve0 = self._factor(None)
        xi, z_hat = solve0(np.zeros(self.m), h)
        s = _cone_shift(dims, -z_hat)
        _, z_hat = solve0(-c, np.zeros(dims.size))
        z = _cone_shift(dims, z_hat)
        tau, kappa = 1.0, 1.0

        status = SolveStatus.MAX_ITER
        message = "iteration limit reached"
        measure = self._measure(xi, s, z, tau, kappa)
        iteration = 0
        for iteration in range(1, self.max_iter + 1):
            rx = G.T @ z + c * tau
            rz = h * tau - G @ xi - s
            rt = -(c @ xi) - (h @ z) - kappa
            measure = self._measure(xi, s, z, tau, kappa)

            logger.debug(
                f"ipm iter {iteration}: pcost={measure.pcost:.6e} dcost={measure.dcost:.6e} "
                f"pres={measure.pres:.2e} dres={measure.dres:.2e} gap={measure.gap:.2e} "
                f"tau={tau:.2e} kappa={kappa:.2e}"
            )

            if self._converged(measure, self.feastol, self.reltol, ABS_GAP_TOL):
                status, message = SolveStatus.OPTIMAL, "optimal"
                break

            # 不可行证书
            hz = float(h @ z)
            if hz < 0 and tau < kappa:
                certificate = float(np.max(np.abs(G.T @ z), initial=0.0)) / -hz
                if certificate <= self.feastol:
                    status, message = SolveStatus.INFEASIBLE, "primal infeasible"
                    break
            cx = float(c @ xi)
            if cx < 0 and tau < kappa:
                certificate = float(np.max(np.abs(G @ xi + s), initial=0.0)) / -cx
                if certificate <= self.feastol:
                    status, message = SolveStatus.INFEASIBLE, "dual infeasible"
                    break

            try:
                scaling = _Scaling(dims, s, z)
                lam = scaling.lam
                kkt = self._factor(scaling)
                x1, z1 = kkt(-c, h)
                denom = kappa / tau - (c @ x1) - (h @ z1)
                if not denom > 0:
                    raise FloatingPointError("degenerate homogeneous direction")
            except (np.linalg.LinAlgError, ValueError, FloatingPointError) as e:
                message = f"numerical failure: {e}"
                logger.debug(message)
                break

            mu = (float(s @ z) + tau * kappa) / (m_degree + 1)

            def direction(eta_r, d_s, d_kappa):
                w_ds = scaling.divide(d_s)
                x2, z2 = kkt(-eta_r * rx, eta_r * rz - scaling.apply(w_ds))
                dtau = (-eta_r * rt + d_kappa / tau + (c @ x2) + (h @ z2)) / denom
                dxi = x2 + dtau * x1
                dz = z2 + dtau * z1
                ws = w_ds - scaling.apply(dz)
                ds = scaling.apply(ws)
                dkappa = (d_kappa - kappa * dtau) / tau
                return dxi, dz, ds, dtau, dkappa, ws

            def step_length(dz, ds, dtau, dkappa):
                alpha = min(_max_step(dims, s, ds), _max_step(dims, z, dz))
                if dtau < 0:
                    alpha = min(alpha, -tau / dtau)
                if dkappa < 0:
                    alpha = min(alpha, -kappa / dkappa)
                return alpha

            try:
                # 预测步
                d_s = -_jordan_product(dims, lam, lam)
                dxi, dz, ds, dtau, dkappa, ws = direction(1.0, d_s, -tau * kappa)
                alpha_aff = min(1.0, step_length(dz, ds, dtau, dkappa))
                sigma = (1.0 - alpha_aff) ** 3

                # 校正步
                correction = _jordan_product(dims, ws, scaling.apply(dz))
                d_s = -_jordan_product(dims, lam, lam) + sigma * mu * e - correction
                d_kappa = -tau * kappa + sigma * mu - dtau * dkappa
                dxi, dz, ds, dtau, dkappa, _ = direction(1.0 - sigma, d_s, d_kappa)
            except (np.linalg.LinAlgError, ValueError, FloatingPointError) as e:
                message = f"numerical failure: {e}"
                logger.debug(message)
                break
            alpha = min(1.0, STEP_FRACTION * step_length(dz, ds, dtau, dkappa))

            # 后退直到新迭代点严格位于锥内部
            for _ in range(MAX_BACKTRACKS):
                s_new = s + alpha * ds
                z_new = z + alpha * dz
                tau_new = tau + alpha * dtau
                kappa_new = kappa + alpha * dkappa
                if (
                    tau_new > 0
                    and kappa_new > 0
                    and _is_interior(dims, s_new)
                    and _is_interior(dims, z_new)
                ):
                    break
                alpha *= 0.5
            else:
                message = "numerical failure: no interior step"
                logger.debug(message)
                break

            xi_new = xi + alpha * dxi
            if not np.all(np.isfinite(xi_new)):
                message = "numerical failure: non-finite iterate"
                logger.debug(message)
                break
            xi, s, z, tau, kappa = xi_new, s_new, z_new, tau_new, kappa_new
        else:
            iteration = self.max_iter
            measure = self._measure(xi, s, z, tau, kappa)

        if status == SolveStatus.MAX_ITER and self._converged(
            measure, ACCEPT_FEASTOL, ACCEPT_RELTOL, 10.0 * ABS_GAP_TOL
        ):
            status = SolveStatus.OPTIMAL
            message = f"optimal at reduced accuracy ({message})"
            logger.debug(message)

        return self._result(status, xi, s, z, tau, iteration, measure, message)
