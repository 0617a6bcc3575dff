"""Binary SVM dual for a fixed conic combination of base kernels.

Solves ``max 1'alpha - 1/2 alpha'Y K_theta Y alpha`` subject to ``y'alpha = 0``
and ``0 <= alpha <= C`` by SMO with maximal-violating-pair selection, where
``K_theta = sum_m theta_m K_m``. Also evaluates the per-task multi-kernel
primal objective and the quadratic forms ``G_m = alpha'Y K_m Y alpha``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InputError, SolverError
from .kernels import KernelBank

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 10**6


@dataclass
class TaskDual:
    """Dual solution of one task.

    ``objective`` is the primal value ``1/2 sum_m theta_m G_m + C sum xi`` at the
    primal point reconstructed from ``alpha`` and ``bias``.
    """

    alpha: np.ndarray
    bias: float
    objective: float
    gram_stats: np.ndarray
    slack_total: float
    dual_objective: float = float("nan")
    iterations: int = 0
    kkt_violation: float = 0.0

    @property
    def n_support(self) -> int:
        return int(np.count_nonzero(self.alpha > 0))


def _labels(bank: KernelBank, task: int, y=None) -> np.ndarray:
    y = bank.labels[task] if y is None else y
    if y is None:
        raise InputError(f"task {task} has no labels")
    y = np.asarray(y, dtype=float)
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise InputError("labels must be +1/-1")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise InputError(f"task {task} has a single class")
    return y


def smo(Q, y, C, tol=DEFAULT_TOL, alpha0=None, max_iter=DEFAULT_MAX_ITER):
    """Minimize ``1/2 a'Qa - 1'a`` s.t. ``y'a = 0``, ``0 <= a <= C``.

    ``Q = diag(y) K diag(y)``. Stops when the maximal KKT violation
    ``max_{I_up} -y*grad - min_{I_low} -y*grad`` drops below ``tol``.
    Returns ``(alpha, grad, iterations, violation)``.
    """
    n = y.size
    if alpha0 is None:
        alpha = np.zeros(n)
        grad = -np.ones(n)
    else:
        alpha = _feasible_start(np.asarray(alpha0, dtype=float), y, C)
        grad = Q @ alpha - 1.0
    pos = y > 0
    diagQ = np.diag(Q).copy()
    it = 0
    gap = np.inf
    while True:
        below = alpha < C
        above = alpha > 0
        up = (below & pos) | (above & ~pos)
        low = (below & ~pos) | (above & pos)
        score = -y * grad
        if not up.any() or not low.any():
            gap = 0.0
            break
        i = int(np.flatnonzero(up)[np.argmax(score[up])])
        j = int(np.flatnonzero(low)[np.argmin(score[low])])
        gap = score[i] - score[j]
        if gap < tol:
            break
        if it >= max_iter:
            raise SolverError(
                f"SMO did not converge in {max_iter} iterations (violation {gap:.3g})",
                best=alpha,
                residual=gap,
            )
        it += 1
        yi, yj = y[i], y[j]
        Qi, Qj = Q[i], Q[j]
        ai, aj = alpha[i], alpha[j]
        quad = diagQ[i] + diagQ[j] - 2.0 * yi * yj * Qi[j]
        if quad <= 1e-12:
            quad = 1e-12
        # move along y_i d_i = -y_j d_j, the direction of steepest ascent of the violation
        step = gap / quad
        # alpha_i += y_i * step, alpha_j -= y_j * step, clipped to the box
        lim_i = (C - ai) if yi > 0 else ai
        lim_j = aj if yj > 0 else (C - aj)
        step = min(step, lim_i, lim_j)
        di = yi * step
        dj = -yj * step
        new_i = ai + di
        new_j = aj + dj
        # snap to bounds to avoid drift from rounding
        if new_i < 1e-15 * C:
            new_i = 0.0
        elif new_i > C * (1 - 1e-15):
            new_i = C
        if new_j < 1e-15 * C:
            new_j = 0.0
        elif new_j > C * (1 - 1e-15):
            new_j = C
        di, dj = new_i - ai, new_j - aj
        alpha[i], alpha[j] = new_i, new_j
        grad += di * Qi + dj * Qj
    return alpha, grad, it, float(gap)


def _feasible_start(alpha, y, C):
    """Clip into the box and repair ``y'alpha = 0`` by shrinking the heavier class."""
    alpha = np.clip(alpha, 0.0, C)
    s = float(alpha @ y)
    if abs(s) > 0:
        side = (y > 0) if s > 0 else (y < 0)
        mass = alpha[side].sum()
        if mass > 0:
            alpha[side] *= max(0.0, 1.0 - abs(s) / mass)
    return alpha


def recover_bias(alpha, y, f, C) -> float:
    """Bias from free support vectors, or the midpoint of the KKT-feasible interval.

    ``f`` are the kernel expansion values ``(K_theta (alpha*y))_i`` at training points.
    """
    scale = max(C, 1.0)
    free = (alpha > 1e-8 * scale) & (alpha < C - 1e-8 * scale)
    r = y - f
    if free.any():
        return float(np.mean(r[free]))
    at_zero = alpha <= 1e-8 * scale
    # y_i (f_i + b) >= 1 at zero, <= 1 at C
    lower = (at_zero & (y > 0)) | (~at_zero & (y < 0))
    upper = ~lower
    lb = r[lower].max() if lower.any() else None
    ub = r[upper].min() if upper.any() else None
    if lb is None:
        return float(ub)
    if ub is None:
        return float(lb)
    return float(0.5 * (lb + ub))


def gram_statistics(bank: KernelBank, task: int, alpha, y) -> np.ndarray:
    """``G_m = (alpha*y)' K_m (alpha*y)`` for every kernel m."""
    v = np.asarray(alpha) * np.asarray(y)
    stack = bank.grams[task]
    return np.einsum("mij,i,j->m", stack, v, v)


def compute_objective(dual: TaskDual, theta, C) -> float:
    """Multi-kernel primal value ``sum_m ||f_m||^2 / (2 theta_m) + C sum xi``.

    Uses ``||f_m||^2 = theta_m^2 G_m``, so a zero weight contributes nothing.
    """
    theta = np.asarray(theta, dtype=float)
    quad = 0.5 * float(np.sum(theta * dual.gram_stats))
    return quad + C * dual.slack_total


def solve_task(bank: KernelBank, task: int, theta, C: float, tol: float = DEFAULT_TOL,
               alpha0=None, max_iter: int = DEFAULT_MAX_ITER, y=None) -> TaskDual:
    """Train one binary SVM with the combined kernel ``sum_m theta_m K_m``."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (bank.n_kernels,):
        raise InputError(f"theta must have {bank.n_kernels} entries")
    if np.any(theta < 0) or not np.any(theta > 0):
        raise InputError("theta must be non-negative and not all zero")
    if C <= 0:
        raise InputError("C must be positive")
    y = _labels(bank, task, y)
    K = bank.combined(task, theta)
    Q = K * np.outer(y, y)
    alpha, grad, it, viol = smo(Q, y, C, tol=tol, alpha0=alpha0, max_iter=max_iter)
    return _assemble(bank, task, theta, C, y, K, alpha, it, viol)


def _assemble(bank, task, theta, C, y, K, alpha, it, viol) -> TaskDual:
    ay = alpha * y
    f = K @ ay
    b = recover_bias(alpha, y, f, C)
    slack = np.maximum(0.0, 1.0 - y * (f + b))
    G = gram_statistics(bank, task, alpha, y)
    dual_obj = float(alpha.sum() - 0.5 * ay @ f)
    d = TaskDual(alpha=alpha, bias=b, objective=0.0, gram_stats=G,
                 slack_total=float(slack.sum()), dual_objective=dual_obj,
                 iterations=it, kkt_violation=viol)
    d.objective = compute_objective(d, theta, C)
    return d


def decision_values(dual: TaskDual, bank: KernelBank, task: int, theta, points, y=None) -> np.ndarray:
    """``sum_m theta_m sum_i alpha_i y_i k_m(x_i, x) + b`` for each query point."""
    y = _labels(bank, task, y)
    theta = np.asarray(theta, dtype=float)
    cross = bank.cross(task, points)  # (M, N, P)
    ay = dual.alpha * y
    per_kernel = np.einsum("mnp,n->mp", cross, ay)
    return theta @ per_kernel + dual.bias
