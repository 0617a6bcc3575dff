"""Training algorithms for Pareto-path multi-task MKL.

Three routes, selected by the scalarization exponent p:

* ``p >= 1`` -- :func:`train_convex`, a mirror-prox (Tseng) method on the
  convex-concave saddle function ``Phi(theta, beta, lambda)``;
* ``p == 1`` -- :func:`train_p1`, block-coordinate descent alternating T SVM
  solves with a closed-form kernel-weight update;
* ``0 < p < 1`` -- :func:`train_nonconvex`, group-coordinate descent over the
  SVMs, the kernel weights and the task weights.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import scalarization as sc
from .exceptions import ContractError, InputError, SolverError
from .kernels import KernelBank
from .projections import ThetaSubproblem, solve_beta_lambda_qp, theta_min_ball_1, theta_min_ball_s
from .svm_dual import TaskDual, decision_values, solve_task

log = logging.getLogger(__name__)


@dataclass
class SolverConfig:
    """Hyper-parameters and stopping rules shared by the three trainers.

    ``gap_tol`` is relative: mirror-prox stops once the duality gap is below
    ``gap_tol * (1 + |Phi|)``. ``obj_tol`` is the relative objective change
    that stops the coordinate-descent trainers.
    """

    p: sc.PParam = field(default_factory=lambda: sc.PParam(1.0))
    s: float = 1.1
    C: float = 1.0
    svm_tol: float = 1e-8
    qp_tol: float = 1e-6
    gap_tol: float = 1e-3
    obj_tol: float = 1e-5
    max_outer: int = 200
    max_tseng_iter: int = 10000
    zeta0: float = 1e3
    zeta_relax: float = 0.8
    zeta_max: float = 1e12
    freeze_tol: float = 1e-2
    monotone_tol: float = 1e-8
    warm_theta: Optional[np.ndarray] = None
    seed: int = 0

    def __post_init__(self):
        self.p = sc.PParam.parse(self.p)
        if self.s < 1:
            raise InputError("s must be >= 1")
        if self.C <= 0:
            raise InputError("C must be positive")


@dataclass
class ModelState:
    """A trained model: shared kernel weights, task weights and per-task SVMs."""

    theta: np.ndarray
    lam: np.ndarray
    duals: list[TaskDual]
    p: sc.PParam
    s: float
    C: float
    objective_vector: np.ndarray
    scalar_objective: float
    iterations: int = 0
    converged: bool = True
    gap: float = math.nan
    history: list[float] = field(default_factory=list)
    lam_history: list[float] = field(default_factory=list)

    @property
    def n_tasks(self) -> int:
        return len(self.duals)


def _ball_point(n: int, q: float) -> np.ndarray:
    """Uniform vector with unit ``nu_q`` (all ones for q = inf)."""
    if math.isinf(q):
        return np.ones(n)
    return np.full(n, float(n) ** (-1.0 / q))


def _labels(bank: KernelBank) -> list[np.ndarray]:
    ys = []
    for t, y in enumerate(bank.labels):
        if y is None:
            raise InputError(f"task {t} has no labels")
        ys.append(np.asarray(y, dtype=float))
    return ys


# ---------------------------------------------------------------------------
# saddle function and its gradient
# ---------------------------------------------------------------------------


def _kernel_products(bank, t, v):
    """``(K_m v)`` for all m, shape (M, N)."""
    return bank.grams[t] @ v


def phi(theta, beta, lam, bank: KernelBank, C=None) -> float:
    """``sum_t [1'beta^t - (1/(2 lambda_t)) beta^t' Y K_theta Y beta^t]``.

    ``C`` is accepted for signature symmetry; feasibility is the caller's job.
    """
    theta = np.asarray(theta, dtype=float)
    lam = np.asarray(lam, dtype=float)
    ys = _labels(bank)
    total = 0.0
    for t, (b, y) in enumerate(zip(beta, ys)):
        b = np.asarray(b, dtype=float)
        if not np.any(b != 0):
            continue
        if lam[t] <= 0:
            raise InputError(f"lambda_{t} = 0 requires beta^{t} = 0")
        v = b * y
        quad = float(theta @ (_kernel_products(bank, t, v) @ v))
        total += float(b.sum()) - quad / (2.0 * lam[t])
    return total


def grad_phi(theta, beta, lam, bank: KernelBank, C=None):
    """Analytic gradient ``(d/dtheta, [d/dbeta^t], d/dlambda)`` of :func:`phi`."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0):
        raise InputError("grad_phi needs strictly positive task weights")
    return _grad(np.asarray(theta, dtype=float), beta, lam, bank, _labels(bank))


def _grad(theta, beta, lam, bank, ys):
    """Gradient with the convention that a task with ``beta = 0, lambda = 0``
    contributes only the constant ``1`` to its beta block."""
    g_theta = np.zeros_like(theta)
    g_beta = []
    g_lam = np.zeros_like(lam)
    for t, (b, y) in enumerate(zip(beta, ys)):
        if lam[t] <= 0 or not np.any(b != 0):
            g_beta.append(np.ones_like(b))
            continue
        v = b * y
        Kv = _kernel_products(bank, t, v)  # (M, N)
        Gm = Kv @ v
        g_theta -= Gm / (2.0 * lam[t])
        g_beta.append(1.0 - y * (theta @ Kv) / lam[t])
        g_lam[t] = float(theta @ Gm) / (2.0 * lam[t] ** 2)
    return g_theta, g_beta, g_lam


# ---------------------------------------------------------------------------
# generic Tseng / mirror-prox iteration
# ---------------------------------------------------------------------------


@dataclass
class TsengState:
    """Iterate of the mirror-prox method.

    ``u`` is the flat concatenation of all variable blocks and ``zeta`` the
    weight of the Bregman proximity term (the inverse of the step size).
    """

    u: np.ndarray
    zeta: float
    bregman_base: dict = field(default_factory=dict)
    gap: float = math.inf
    iter: int = 0
    rejections: int = 0


def tseng_inner_step(state: TsengState, problem) -> np.ndarray:
    """Candidate ``v = argmin_u u'q(u_k) + zeta D(u, u_k)``."""
    return problem.prox(state.u, problem.operator(state.u), state.zeta)


def tseng_check_and_update(state: TsengState, v: np.ndarray, problem, zeta_max: float = 1e12,
                           relax: float = 0.8):
    """Extragradient correction with the acceptance test.

    Computes ``w = argmin_u u'q(v) + zeta D(u, u_k)`` and accepts it as the next
    iterate when ``w'q(v) + zeta D(w, u_k) >= v'q(v)``. The test holds once
    ``zeta`` exceeds the local Lipschitz constant of ``q``, so a rejection
    doubles ``zeta`` (halving the step ``1/zeta``) and keeps the iterate. An
    accepted step multiplies ``zeta`` by ``relax`` (1 keeps it fixed), which
    lets the step grow back where the operator is smoother.
    Returns ``(accepted, new_state)``.
    """
    qv = problem.operator(v)
    w = problem.prox(state.u, qv, state.zeta)
    lhs = float(w @ qv) + state.zeta * problem.bregman(w, state.u)
    rhs = float(v @ qv)
    slack = 1e-12 * (1.0 + abs(lhs) + abs(rhs))
    if lhs >= rhs - slack:
        return True, replace(state, u=w, iter=state.iter + 1, zeta=state.zeta * relax)
    zeta = 2.0 * state.zeta
    if zeta > zeta_max:
        raise SolverError(
            f"step size collapsed (zeta = {zeta:.3g}); operator is not Lipschitz here",
            best=state,
            residual=state.gap,
        )
    return False, replace(state, zeta=zeta, rejections=state.rejections + 1)


class MKLSaddleProblem:
    """The multi-task MKL saddle problem laid out for the generic iteration.

    The flat vector is ``[theta, beta^1, ..., beta^T, lambda]``. Bregman
    functions: ``(1/sbar) ||theta||_sbar^sbar`` with ``sbar = s`` for s > 1
    and 2 for s = 1, ``||beta / C||_2^2`` and ``||lambda||_2^2``. Measuring
    beta in units of its box ``[0, lambda_t C]`` keeps the beta and lambda
    blocks equally curved for any C; plain ``||beta||^2`` slows the iteration
    roughly by a factor C^2 when C > 1.

    ``active`` masks tasks that take part in the iteration; an inactive task
    is pinned at ``beta^t = 0, lambda_t = 0``.
    """

    def __init__(self, bank: KernelBank, C: float, q: float, s: float, qp_tol: float = 1e-6):
        self.bank = bank
        self.C = float(C)
        self.q = float(q)
        self.s = float(s)
        self.sbar = self.s if self.s > 1 else 2.0
        self.beta_scale = self.C
        self.qp_tol = qp_tol
        self.ys = _labels(bank)
        M, T = bank.n_kernels, bank.n_tasks
        sizes = [bank.task_size(t) for t in range(T)]
        self.theta_sl = slice(0, M)
        offs = np.cumsum([M] + sizes)
        self.beta_sl = [slice(int(offs[t]), int(offs[t + 1])) for t in range(T)]
        self.lam_sl = slice(int(offs[-1]), int(offs[-1]) + T)
        self.size = int(offs[-1]) + T
        self.active = np.ones(T, dtype=bool)

    @property
    def bregman_base(self) -> dict:
        return {"theta": f"(1/{self.sbar:g})||theta||_{self.sbar:g}^{self.sbar:g}",
                "beta": "||beta / C||_2^2", "lambda": "||lambda||_2^2", "sbar": self.sbar}

    def pack(self, theta, beta, lam) -> np.ndarray:
        return np.concatenate([np.asarray(theta, float)] + [np.asarray(b, float) for b in beta]
                              + [np.asarray(lam, float)])

    def unpack(self, u):
        return u[self.theta_sl], [u[sl] for sl in self.beta_sl], u[self.lam_sl]

    def initial(self, theta0=None) -> np.ndarray:
        M, T = self.bank.n_kernels, self.bank.n_tasks
        theta = _ball_point(M, self.s) if theta0 is None else np.asarray(theta0, float)
        lam = _ball_point(T, self.q)
        beta = [np.zeros(self.bank.task_size(t)) for t in range(T)]
        return self.pack(theta, beta, lam)

    def operator(self, u) -> np.ndarray:
        theta, beta, lam = self.unpack(u)
        gt, gb, gl = _grad(theta, beta, lam, self.bank, self.ys)
        return self.pack(gt, [-g for g in gb], -gl)

    def h_theta(self, theta):
        return float(np.sum(theta**self.sbar)) / self.sbar

    def bregman(self, u, center) -> float:
        th, be, la = self.unpack(u)
        tc, bc, lc = self.unpack(center)
        d_theta = self.h_theta(th) - self.h_theta(tc) - float((th - tc) @ tc ** (self.sbar - 1.0))
        d_beta = sum(float(np.sum((b - c) ** 2)) for b, c in zip(be, bc)) / self.beta_scale**2
        return d_theta + d_beta + float(np.sum((la - lc) ** 2))

    def prox(self, center, linear, zeta) -> np.ndarray:
        tc, bc, lc = self.unpack(center)
        lt, lb, ll = self.unpack(linear)
        psi = np.maximum(tc ** (self.sbar - 1.0) - lt / zeta, 0.0)
        if self.s > 1:
            theta = theta_min_ball_s(ThetaSubproblem(psi, self.s))
        else:
            theta = theta_min_ball_1(ThetaSubproblem(psi, self.sbar))
        idx = np.flatnonzero(self.active)
        # solve in b = beta / C, whose box is [0, lambda_t]
        w = self.beta_scale
        a = [-w * lb[t] / zeta + 2.0 * bc[t] / w for t in idx]
        c = -ll[idx] / zeta + 2.0 * lc[idx]
        point = solve_beta_lambda_qp(a, c, self.C / w, self.q, [self.ys[t] for t in idx], tol=self.qp_tol)
        beta = [np.zeros_like(b) for b in bc]
        lam = np.zeros_like(lc)
        for k, t in enumerate(idx):
            beta[t] = w * point.beta[k]
            lam[t] = point.lam[k]
        return self.pack(theta, beta, lam)

    def phi(self, u) -> float:
        theta, beta, lam = self.unpack(u)
        total = 0.0
        for t, (b, y) in enumerate(zip(beta, self.ys)):
            if lam[t] <= 0 or not np.any(b != 0):
                continue
            v = b * y
            total += float(b.sum()) - float(theta @ (_kernel_products(self.bank, t, v) @ v)) / (2.0 * lam[t])
        return total


def _max_linear_over_ball(S, s) -> float:
    """``max theta'S`` over ``{theta >= 0, ||theta||_s <= 1}`` for ``S >= 0``."""
    if s == 1.0:
        return float(np.max(S))
    if not np.any(S > 0):
        return 0.0
    return sc.nu_p(S, s / (s - 1.0))


def duality_gap(state: TsengState, problem: MKLSaddleProblem, p: sc.PParam, svm_tol=1e-8,
                warm=None):
    """Gap ``max_{beta,lambda} Phi(theta_k, .) - min_theta Phi(., beta_k, lambda_k)``.

    The max term equals ``nu_p(D)`` where ``D_t`` is the optimal SVM dual value
    of task t at ``theta_k``; the min term is linear in theta and minimized in
    closed form over the ``s``-ball. Returns ``(gap, duals)``; the duals are the
    T single-task solutions at ``theta_k``.
    """
    theta, beta, lam = problem.unpack(state.u)
    bank = problem.bank
    duals = []
    for t in range(bank.n_tasks):
        a0 = None
        if warm is not None:
            a0 = warm[t].alpha
        elif lam[t] > 1e-12:
            a0 = beta[t] / lam[t]
        duals.append(solve_task(bank, t, theta, problem.C, tol=svm_tol, alpha0=a0))
    D = np.array([max(d.dual_objective, 0.0) for d in duals])
    upper = sc.nu_p(D, p)
    S = np.zeros(bank.n_kernels)
    lin = 0.0
    for t, (b, y) in enumerate(zip(beta, problem.ys)):
        lin += float(b.sum())
        if lam[t] <= 0 or not np.any(b != 0):
            continue
        v = b * y
        S += (_kernel_products(bank, t, v) @ v) / (2.0 * lam[t])
    lower = lin - _max_linear_over_ball(S, problem.s)
    return upper - lower, duals


def _should_reactivate(D, active, t, p: sc.PParam, freeze_tol) -> bool:
    """Whether the exact maximizing weight of an inactive task is non-negligible."""
    top = D.max()
    if top <= 0:
        return False
    if p.is_infinite:
        return D[t] >= D[active].max() if active.any() else True
    return (D[t] / top) ** (p.value - 1.0) >= 10.0 * freeze_tol


def train_convex(bank: KernelBank, config: SolverConfig, callback=None) -> ModelState:
    """Mirror-prox training for ``p >= 1`` (p = inf uses the simplex for lambda).

    A task whose weight falls below ``freeze_tol * max(lambda)`` is pinned at
    zero: near ``lambda_t = 0`` the operator's Lipschitz constant grows like
    ``1/lambda_t`` and would throttle the step for every block. It rejoins
    when the exact SVM duals computed for the gap give it a non-negligible
    optimal weight.
    """
    p = config.p
    if not p.convex:
        raise InputError(f"train_convex needs p >= 1, got {p}")
    problem = MKLSaddleProblem(bank, config.C, p.q, config.s, qp_tol=config.qp_tol)
    state = TsengState(u=problem.initial(config.warm_theta), zeta=config.zeta0,
                       bregman_base=problem.bregman_base)
    gap, duals = duality_gap(state, problem, p, config.svm_tol)
    state = replace(state, gap=gap)
    history, lam_hist = [gap], []
    best = (gap, state, duals)
    revivals = np.zeros(bank.n_tasks, dtype=int)
    while True:
        phi_val = problem.phi(state.u)
        if state.gap < config.gap_tol * (1.0 + abs(phi_val)):
            break
        if state.iter >= config.max_tseng_iter:
            raise SolverError(
                f"mirror-prox did not reach the gap tolerance in {config.max_tseng_iter} "
                f"iterations (gap {state.gap:.3g})",
                best=_finish(bank, config, best[1], problem, best[2], history, lam_hist, False),
                residual=best[0],
            )
        v = tseng_inner_step(state, problem)
        accepted, state = tseng_check_and_update(state, v, problem, config.zeta_max, config.zeta_relax)
        if not accepted:
            continue
        lam_now = state.u[problem.lam_sl]
        lam_hist.append(float(lam_now.min()))
        gap, duals = duality_gap(state, problem, p, config.svm_tol, warm=duals)
        state = replace(state, gap=gap)
        history.append(gap)
        if gap < best[0]:
            best = (gap, state, duals)
        if config.freeze_tol > 0 and not math.isinf(p.q):
            state = _update_active_set(state, problem, duals, p, config.freeze_tol, revivals)
        if callback is not None:
            callback(state, problem)
    return _finish(bank, config, state, problem, duals, history, lam_hist, True)


def _update_active_set(state, problem, duals, p, freeze_tol, revivals, max_revivals=3):
    lam = state.u[problem.lam_sl]
    active = problem.active
    D = np.array([max(d.dual_objective, 0.0) for d in duals])
    u = state.u
    for t in np.flatnonzero(~active):
        if _should_reactivate(D, active, t, p, freeze_tol):
            active[t] = True
            revivals[t] += 1
    top = lam.max()
    for t in np.flatnonzero(active):
        if revivals[t] < max_revivals and 0 < top and lam[t] < freeze_tol * top:
            active[t] = False
            u = u.copy()
            u[problem.beta_sl[t]] = 0.0
            u[problem.lam_sl.start + t] = 0.0
    return replace(state, u=u) if u is not state.u else state


def _finish(bank, config, state, problem, duals, history, lam_hist, converged) -> ModelState:
    theta, _, lam = problem.unpack(state.u)
    g = np.array([d.objective for d in duals])
    return ModelState(
        theta=theta.copy(), lam=lam.copy(), duals=duals, p=config.p, s=config.s, C=config.C,
        objective_vector=g, scalar_objective=sc.nu_p(g, config.p), iterations=state.iter,
        converged=converged, gap=state.gap, history=list(history), lam_history=list(lam_hist),
    )


# ---------------------------------------------------------------------------
# coordinate descent: p = 1 and 0 < p < 1
# ---------------------------------------------------------------------------


def theta_update(theta, duals, lam, s) -> np.ndarray:
    """Closed-form kernel weights for fixed SVM solutions and task weights.

    Minimizes ``sum_m a_m / theta_m`` over the s-ball, where
    ``a_m = sum_t theta_m^2 G_m^t / lambda_t``; the minimizer is proportional to
    ``a^(1/(s+1))`` scaled to unit ``nu_s``. All-zero ``a`` keeps ``theta``.
    """
    theta = np.asarray(theta, dtype=float)
    lam = np.asarray(lam, dtype=float)
    # task weights only matter up to a common factor
    w = np.zeros_like(lam)
    pos = lam > 0
    w[pos] = lam[pos].max() / lam[pos]
    a = np.zeros_like(theta)
    for d, wt in zip(duals, w):
        if wt > 0:
            a += wt * theta**2 * np.maximum(d.gram_stats, 0.0)
    if not np.any(a > 0):
        return theta.copy()
    top = a.max()
    v = (a / top) ** (1.0 / (s + 1.0))
    return v / sc.nu_p(v, s)


def objective_fixed_functions(theta_old, theta_new, duals, C) -> np.ndarray:
    """Task objectives after changing theta with the functions f_m^t held fixed.

    ``||f_m||^2 = theta_old_m^2 G_m`` is divided by ``2 theta_new_m``; slacks
    are unchanged.
    """
    g = np.empty(len(duals))
    for t, d in enumerate(duals):
        num = theta_old**2 * np.maximum(d.gram_stats, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(num > 0, num / (2.0 * theta_new), 0.0)
        g[t] = float(np.sum(terms)) + C * d.slack_total
    return g


def _coordinate_descent(bank: KernelBank, config: SolverConfig, nonconvex: bool, callback=None):
    p = config.p
    T, M = bank.n_tasks, bank.n_kernels
    theta = _ball_point(M, config.s) if config.warm_theta is None else np.asarray(config.warm_theta, float)
    lam = _ball_point(T, p.q) if nonconvex else np.ones(T)
    duals = [None] * T
    history: list[float] = []
    converged = False
    it = 0
    for it in range(1, config.max_outer + 1):
        duals = [
            solve_task(bank, t, theta, config.C, tol=config.svm_tol,
                       alpha0=None if duals[t] is None else duals[t].alpha)
            for t in range(T)
        ]
        new_theta = theta_update(theta, duals, lam, config.s)
        g = objective_fixed_functions(theta, new_theta, duals, config.C)
        theta = new_theta
        if nonconvex:
            lam = sc.lambda_star_nonconvex(g, p)
            value = sc.nu_p(g, p)
        else:
            value = float(g.sum())
        _record(history, value, config.monotone_tol)
        if callback is not None:
            callback(it, theta, lam, g)
        if len(history) > 1 and abs(history[-2] - value) <= config.obj_tol * abs(history[-2]):
            converged = True
            break
    # final SVMs at the final kernel weights; can only lower the objective
    duals = [solve_task(bank, t, theta, config.C, tol=config.svm_tol, alpha0=duals[t].alpha)
             for t in range(T)]
    g = np.array([d.objective for d in duals])
    if nonconvex:
        lam = sc.lambda_star_nonconvex(g, p)
    value = sc.nu_p(g, p)
    _record(history, value, config.monotone_tol)
    return ModelState(theta=theta, lam=lam, duals=duals, p=p, s=config.s, C=config.C,
                      objective_vector=g, scalar_objective=value, iterations=it,
                      converged=converged, history=history)


def _record(history, value, tol):
    if history and value > history[-1] + tol * max(abs(history[-1]), 1e-300):
        raise ContractError(
            f"coordinate descent increased the objective: {history[-1]:.17g} -> {value:.17g}"
        )
    history.append(value)


def train_nonconvex(bank: KernelBank, config: SolverConfig, callback=None) -> ModelState:
    """Group-coordinate descent for ``0 < p < 1``."""
    if not 0 < config.p.value < 1:
        raise InputError(f"train_nonconvex needs 0 < p < 1, got {config.p}")
    return _coordinate_descent(bank, config, nonconvex=True, callback=callback)


def train_p1(bank: KernelBank, config: SolverConfig, callback=None) -> ModelState:
    """Block-coordinate descent on the plain sum of task objectives (p = 1)."""
    if config.p.value != 1.0:
        raise InputError(f"train_p1 needs p = 1, got {config.p}")
    return _coordinate_descent(bank, config, nonconvex=False, callback=callback)


def train(bank: KernelBank, config: SolverConfig, p1_route: str = "bcd") -> ModelState:
    """Dispatch on p: p < 1 non-convex, p = 1 block-coordinate (or mirror-prox), else mirror-prox."""
    p = config.p.value
    if p < 1:
        return train_nonconvex(bank, config)
    if p == 1 and p1_route == "bcd":
        return train_p1(bank, config)
    return train_convex(bank, config)


def predict(model: ModelState, bank: KernelBank, task: int, points) -> np.ndarray:
    """Predicted labels in {-1, +1}; a decision value of exactly 0 maps to +1."""
    if not 0 <= task < model.n_tasks:
        raise InputError(f"task index {task} out of range")
    vals = decision_values(model.duals[task], bank, task, model.theta, points)
    return np.where(vals >= 0, 1, -1)
