"""
增广拉格朗日法（PHR 形式）

    L(x) = f + λᵀc + ρ/2·‖c‖² + 1/(2ρ)·Σ(max(0, μ + ρg)² − μ²)

外层更新乘子或放大罚参数，内层用 BFGS 求无约束子问题；
结束后在活动集上做 Newton-KKT 修正。
"""

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Protocol, Tuple

import numpy as np
import scipy.linalg
import scipy.optimize

from app.config import (
    AUGLAG_MAX_OUTER,
    AUGLAG_PENALTY_GROWTH,
    AUGLAG_PENALTY_INIT,
    AUGLAG_PENALTY_MAX,
)
from app.core.utils.logger import setup_logger

logger = setup_logger("auglag")

MAX_INNER_ITERATIONS = 3000
MAX_REFINE_ITERATIONS = 12
ACTIVE_TOL = 1e-5


class ConstrainedProblem(Protocol):
    n: int

    def objective(self, x: np.ndarray) -> float: ...

    def objective_gradient(self, x: np.ndarray) -> np.ndarray: ...

    def equality(self, x: np.ndarray) -> np.ndarray: ...

    def equality_jacobian(self, x: np.ndarray) -> np.ndarray: ...

    def inequality(self, x: np.ndarray) -> np.ndarray: ...

    def inequality_jacobian(self, x: np.ndarray) -> np.ndarray: ...


@dataclass
class AugLagResult:
    x: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    converged: bool
    outer_iterations: int
    inner_iterations: int
    penalty: float
    max_violation: float
    stationarity: float
    refined: bool = False
    message: str = ""
    merit_history: List[List[float]] = field(default_factory=list)


class AugmentedLagrangian:
    """
    参数：
    - problem: 提供目标、约束及其雅可比
    - feas_tol: 约束违反量容差
    - opt_tol: 拉格朗日函数梯度（驻点）容差
    - max_outer: 最大外层迭代次数
    """

    def __init__(
        self,
        problem: ConstrainedProblem,
        feas_tol: float,
        opt_tol: float,
        max_outer: int = AUGLAG_MAX_OUTER,
        penalty_init: float = AUGLAG_PENALTY_INIT,
        penalty_growth: float = AUGLAG_PENALTY_GROWTH,
        penalty_max: float = AUGLAG_PENALTY_MAX,
        refine: bool = True,
    ):
        self.problem = problem
        self.feas_tol = feas_tol
        self.opt_tol = opt_tol
        self.max_outer = max_outer
        self.penalty_init = penalty_init
        self.penalty_growth = penalty_growth
        self.penalty_max = penalty_max
        self.refine = refine
        self.lam = np.zeros(0)
        self.mu = np.zeros(0)
        self.rho = penalty_init

    # ---------- 增广拉格朗日函数 ----------

    def merit(self, x: np.ndarray) -> float:
        return self.merit_and_gradient(x)[0]

    def merit_gradient(self, x: np.ndarray) -> np.ndarray:
        return self.merit_and_gradient(x)[1]

    def merit_and_gradient(self, x: np.ndarray) -> Tuple[float, np.ndarray]:
        p = self.problem
        rho, lam, mu = self.rho, self.lam, self.mu
        c = p.equality(x)
        g = p.inequality(x)
        shifted = np.maximum(0.0, mu + rho * g)
        value = (
            p.objective(x)
            + lam @ c
            + 0.5 * rho * (c @ c)
            + (shifted @ shifted - mu @ mu) / (2.0 * rho)
        )
        grad = p.objective_gradient(x) + p.equality_jacobian(x).T @ (lam + rho * c)
        if len(g):
            grad = grad + p.inequality_jacobian(x).T @ shifted
        return float(value), grad

    # ---------- KKT 度量 ----------

    def lagrangian_gradient(self, x, lam, mu) -> np.ndarray:
        p = self.problem
        grad = p.objective_gradient(x) + p.equality_jacobian(x).T @ lam
        if len(mu):
            grad = grad + p.inequality_jacobian(x).T @ mu
        return grad

    def violation(self, x: np.ndarray) -> float:
        c = self.problem.equality(x)
        g = self.problem.inequality(x)
        return max(
            float(np.max(np.abs(c), initial=0.0)),
            float(np.max(g, initial=0.0)),
        )

    def kkt_residual(self, x, lam, mu) -> Tuple[float, float, float]:
        """返回 (驻点残差, 约束违反量, 互补残差)"""
        g = self.problem.inequality(x)
        stationarity = float(np.max(np.abs(self.lagrangian_gradient(x, lam, mu)), initial=0.0))
        complementarity = float(np.max(np.abs(mu * g), initial=0.0))
        return stationarity, self.violation(x), complementarity

    # ---------- 主循环 ----------

    def solve(
        self,
        x0: np.ndarray,
        callback: Optional[Callable[[int, str], None]] = None,
    ) -> AugLagResult:
        p = self.problem
        x = np.array(x0, dtype=float)
        self.lam = np.zeros(len(p.equality(x)))
        self.mu = np.zeros(len(p.inequality(x)))
        self.rho = self.penalty_init

        omega0, eta0 = 1.0, 1.0
        alpha_omega, beta_omega, alpha_eta, beta_eta = 1.0, 1.0, 0.1, 0.9
        omega = max(omega0 / self.rho**alpha_omega, self.opt_tol)
        eta = max(eta0 / self.rho**alpha_eta, self.feas_tol)

        history: List[List[float]] = []
        inner_total = 0
        converged = False
        outer = 0
        message = "outer iteration limit reached"
        for outer in range(1, self.max_outer + 1):
            merits: List[float] = []
            merits.append(self.merit(x))
            result = scipy.optimize.minimize(
                self.merit_and_gradient,
                x,
                jac=True,
                method="BFGS",
                callback=lambda xk: merits.append(self.merit(xk)),
                options={"gtol": omega, "maxiter": MAX_INNER_ITERATIONS, "norm": np.inf},
            )
            history.append(merits)
            inner_total += int(result.nit)
            if np.all(np.isfinite(result.x)):
                x = result.x

            c = p.equality(x)
            g = p.inequality(x)
            measure = max(
                float(np.max(np.abs(c), initial=0.0)),
                float(np.max(np.abs(np.maximum(g, -self.mu / self.rho)), initial=0.0)),
            )
            logger.debug(
                f"auglag outer {outer}: merit={merits[-1]:.9g} violation={measure:.3e} "
                f"rho={self.rho:.1e} inner={result.nit} ({result.message})"
            )

            if measure <= eta:
                self.lam = self.lam + self.rho * c
                self.mu = np.maximum(0.0, self.mu + self.rho * g)
                stationarity = float(
                    np.max(np.abs(self.lagrangian_gradient(x, self.lam, self.mu)), initial=0.0)
                )
                if measure <= self.feas_tol and stationarity <= self.opt_tol:
                    converged = True
                    message = "converged"
                    break
                # 罚参数仍很小时也按增长因子收紧容差
                shrink = max(self.rho, self.penalty_growth)
                eta = max(eta / shrink**beta_eta, self.feas_tol)
                omega = max(omega / shrink**beta_omega, self.opt_tol)
            else:
                self.rho = min(self.rho * self.penalty_growth, self.penalty_max)
                eta = max(eta0 / self.rho**alpha_eta, self.feas_tol)
                omega = max(omega0 / self.rho**alpha_omega, self.opt_tol)
            if callback:
                callback(outer, f"outer iteration {outer}, violation {measure:.2e}")

        lam, mu = self.lam, self.mu
        refined = False
        if self.refine:
            x_ref, lam_ref, mu_ref, refined = self.refine_kkt(x, lam, mu)
            if refined:
                x, lam, mu = x_ref, lam_ref, mu_ref
        stationarity, violation, complementarity = self.kkt_residual(x, lam, mu)
        if not converged and violation <= self.feas_tol and max(stationarity, complementarity) <= self.opt_tol:
            converged = True
            message = "converged after KKT refinement"

        return AugLagResult(
            x=x,
            lam=lam,
            mu=mu,
            converged=converged,
            outer_iterations=outer,
            inner_iterations=inner_total,
            penalty=self.rho,
            max_violation=violation,
            stationarity=stationarity,
            refined=refined,
            message=message,
            merit_history=history,
        )

    # ---------- Newton-KKT 修正 ----------

    def _lagrangian_hessian(self, x, lam, mu) -> np.ndarray:
        """拉格朗日函数 Hessian 的中心差分近似"""
        n = len(x)
        H = np.zeros((n, n))
        for i in range(n):
            step = 1e-6 * max(1.0, abs(x[i]))
            forward = x.copy()
            forward[i] += step
            backward = x.copy()
            backward[i] -= step
            H[:, i] = (
                self.lagrangian_gradient(forward, lam, mu)
                - self.lagrangian_gradient(backward, lam, mu)
            ) / (2.0 * step)
        return 0.5 * (H + H.T)

    def refine_kkt(self, x, lam, mu) -> Tuple[np.ndarray, np.ndarray, np.ndarray, bool]:
        """在活动集上求解 KKT 方程；只有 KKT 残差下降时才接受"""
        p = self.problem
        best = max(self.kkt_residual(x, lam, mu))
        target = min(self.feas_tol, self.opt_tol) * 1e-2
        improved = False
        active = (mu > 0) | (p.inequality(x) > -ACTIVE_TOL)

        for iteration in range(MAX_REFINE_ITERATIONS):
            if best <= target:
                break
            mu_active = np.where(active, mu, 0.0)
            H = self._lagrangian_hessian(x, lam, mu_active)
            Jc = p.equality_jacobian(x)
            Jg = p.inequality_jacobian(x)[active]
            J = np.vstack([Jc, Jg])
            m = J.shape[0]
            n = len(x)
            kkt = np.zeros((n + m, n + m))
            kkt[:n, :n] = H
            kkt[:n, n:] = J.T
            kkt[n:, :n] = J
            rhs = -np.concatenate(
                [p.objective_gradient(x), p.equality(x), p.inequality(x)[active]]
            )
            try:
                sol = scipy.linalg.solve(kkt, rhs, check_finite=False)
                if not np.all(np.isfinite(sol)) or np.max(np.abs(kkt @ sol - rhs)) > 1e-6 * (1.0 + np.max(np.abs(rhs))):
                    raise np.linalg.LinAlgError("inaccurate KKT solve")
            except (np.linalg.LinAlgError, ValueError):
                sol = scipy.linalg.lstsq(kkt, rhs, check_finite=False)[0]

            dx = sol[:n]
            lam_new = sol[n : n + len(lam)]
            mu_new = np.zeros_like(mu)
            mu_new[active] = sol[n + len(lam) :]
            if np.any(mu_new[active] < 0):
                # 乘子为负的约束移出活动集
                dropped = active & (mu_new < 0)
                active = active & ~dropped
                logger.debug(f"kkt refine: dropping {int(dropped.sum())} inequalities")
                continue

            x_new = x + dx
            g_new = p.inequality(x_new)
            newly_violated = ~active & (g_new > self.feas_tol)
            if np.any(newly_violated):
                active = active | newly_violated
                continue

            residual = max(self.kkt_residual(x_new, lam_new, mu_new))
            logger.debug(f"kkt refine {iteration}: residual {best:.3e} -> {residual:.3e}")
            if not residual < best:
                break
            x, lam, mu, best = x_new, lam_new, mu_new, residual
            improved = True
        return x, lam, mu, improved
