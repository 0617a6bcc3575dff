"""Closed-form kernel-weight subproblems and the coupled (beta, lambda) QP.

The QP solved by :func:`solve_beta_lambda_qp` is

    min ||beta||^2 - beta'a + ||lambda||^2 - lambda'c
    s.t. beta^t'y^t = 0,  0 <= beta^t <= lambda^t C,  lambda >= 0,  ||lambda||_q <= 1,

i.e. the Euclidean projection of ``(a/2, c/2)`` onto a convex set. It is solved
by nesting three monotone scalar root finds: the hyperplane shift per task, the
task weight per task, and the multiplier of the norm constraint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .exceptions import InputError, SolverError


@dataclass
class ThetaSubproblem:
    """``min (1/s) 1'theta^s - psi'theta`` over a norm ball; ``r = 1/(s-1)``."""

    psi: np.ndarray
    s: float

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=float)
        if np.any(self.psi < 0):
            raise InputError("psi must be non-negative")
        if self.s < 1:
            raise InputError("s must be >= 1")

    @property
    def r(self) -> float:
        return 1.0 / (self.s - 1.0)

    def objective(self, theta) -> float:
        theta = np.asarray(theta, dtype=float)
        return float(np.sum(theta**self.s) / self.s - self.psi @ theta)


def _powr(psi, r):
    # psi ** r with r up to 1e2 can overflow; the callers normalize afterwards
    with np.errstate(over="ignore"):
        return psi**r


def theta_min_ball_s(prob: ThetaSubproblem) -> np.ndarray:
    """Minimizer over ``{theta >= 0, ||theta||_s <= 1}``: ``psi^r / max(1, ||psi^r||_s)``."""
    if prob.s <= 1:
        raise InputError("theta_min_ball_s needs s > 1")
    psi = prob.psi
    if not np.any(psi > 0):
        return np.zeros_like(psi)
    r, s = prob.r, prob.s
    # scale out the largest entry so psi^r cannot overflow
    top = psi.max()
    v = (psi / top) ** r
    log_norm = r * math.log(top) + math.log(np.sum(v**s)) / s
    if log_norm <= 0.0:
        return _powr(psi, r)
    return v / np.sum(v**s) ** (1.0 / s)


def theta_min_ball_1(prob: ThetaSubproblem) -> np.ndarray:
    """Minimizer over ``{theta >= 0, ||theta||_1 <= 1}``: ``max(psi - mu, 0)^r``.

    ``mu`` is the smallest non-negative shift that makes the result feasible.
    For r = 1 it is found by scanning the sorted breakpoints; otherwise by
    bracketing root-finding on the monotone map ``mu -> ||theta(mu)||_1``.
    """
    psi = prob.psi
    r = prob.r
    if not np.any(psi > 0):
        return np.zeros_like(psi)
    theta0 = _powr(psi, r)
    if np.sum(theta0) <= 1.0:
        return theta0
    mu = _l1_shift(psi, r)
    return np.maximum(psi - mu, 0.0) ** r


def _l1_shift(psi, r) -> float:
    if r == 1.0:
        u = np.sort(psi)[::-1]
        css = np.cumsum(u) - 1.0
        k = np.arange(1, u.size + 1)
        rho = np.flatnonzero(u * k > css)[-1]
        return float(max(css[rho] / (rho + 1.0), 0.0))
    top = psi.max()
    f = lambda mu: np.sum(np.maximum(psi - mu, 0.0) ** r) - 1.0
    # f(top) = -1 < 0 and f(0) > 0 here
    return float(brentq(f, 0.0, top, xtol=1e-15 * max(top, 1.0), rtol=8.9e-16, maxiter=500))


def project_lq_ball(v, q: float) -> np.ndarray:
    """Euclidean projection of ``v`` onto ``{lambda >= 0, ||lambda||_q <= 1}``."""
    v = np.asarray(v, dtype=float)
    if q < 1:
        raise InputError("q must be >= 1")
    w = np.maximum(v, 0.0)
    if math.isinf(q):
        return np.minimum(w, 1.0)
    if _qnorm(w, q) <= 1.0:
        return w
    if q == 1.0:
        return np.maximum(w - _l1_shift(w, 1.0), 0.0)
    if q == 2.0:
        return w / np.linalg.norm(w)
    # KKT: x_i + kappa x_i^(q-1) = w_i; each x_i(kappa) by safeguarded Newton,
    # then kappa by bracketing on ||x(kappa)||_q = 1
    def x_of(kappa):
        x = w / (1.0 + kappa) if q > 2 else w.copy()
        lo = np.zeros_like(w)
        hi = w.copy()
        for _ in range(100):
            f = x + kappa * x ** (q - 1.0) - w
            lo = np.where(f < 0, x, lo)
            hi = np.where(f > 0, x, hi)
            with np.errstate(divide="ignore", invalid="ignore"):
                df = 1.0 + kappa * (q - 1.0) * x ** (q - 2.0)
                step = x - f / df
            bad = ~np.isfinite(step) | (step <= lo) | (step >= hi)
            step = np.where(bad, 0.5 * (lo + hi), step)
            if np.max(np.abs(step - x)) <= 1e-16 * max(1.0, w.max()):
                x = step
                break
            x = step
        return x

    g = lambda kappa: _qnorm(x_of(kappa), q) - 1.0
    hi = 1.0
    while g(hi) > 0:
        hi *= 4.0
    kappa = brentq(g, 0.0, hi, xtol=1e-15, rtol=8.9e-16, maxiter=500)
    return x_of(kappa)


def _qnorm(x, q) -> float:
    if math.isinf(q):
        return float(np.max(x)) if x.size else 0.0
    top = np.max(x)
    if top <= 0:
        return 0.0
    return float(top * np.sum((x / top) ** q) ** (1.0 / q))


# ---------------------------------------------------------------------------
# coupled (beta, lambda) QP
# ---------------------------------------------------------------------------


@dataclass
class BetaLambdaPoint:
    """Solution of the coupled QP: per-task ``beta`` blocks and task weights."""

    beta: list[np.ndarray]
    lam: np.ndarray
    objective: float = math.nan
    kkt_residual: float = math.nan



def box_hyperplane_projection(w, y, upper):
    """Projection of ``w`` onto ``{beta : y'beta = 0, 0 <= beta <= upper}``.

    ``beta(tau) = clip(w - tau*y, 0, upper)`` and ``y'beta(tau)`` is piecewise
    linear and non-increasing in ``tau``, so the root is located exactly by
    interpolating between its breakpoints. Returns ``(beta, tau)``.
    """
    w = np.asarray(w, dtype=float)
    y = np.asarray(y, dtype=float)
    if upper <= 0.0:
        return np.zeros_like(w), 0.0
    bps = np.concatenate([w * y, (w - upper) * y])
    bps.sort()
    vals = np.clip(w - bps[:, None] * y, 0.0, upper) @ y
    # left of the first breakpoint y'beta equals (#positives) * upper > 0
    below = vals <= 0.0
    k = int(np.argmax(below))
    if not below[k] or k == 0:
        raise InputError("labels must contain both classes")
    if vals[k] == 0.0:
        tau = bps[k]
    else:
        t0, t1, v0, v1 = bps[k - 1], bps[k], vals[k - 1], vals[k]
        tau = t0 + (t1 - t0) * (v0 / (v0 - v1))
    return np.clip(w - tau * y, 0.0, upper), float(tau)


class _TaskBlock:
    """One task's share of the QP as a function of its weight ``l``.

    ``value(l) = min ||beta - w||^2 + (l - z)^2`` over the task's beta set with
    box ``[0, l*C]``. ``value`` is convex in ``l`` and its derivative is
    piecewise linear: it follows from the multipliers of the active upper
    bounds, and its own slope from the active sets.
    """

    def __init__(self, w, z, y, C):
        self.w = w
        self.z = float(z)
        self.y = y
        self.C = float(C)
        self.floor = 1e-13 * max(1.0, float(np.max(np.abs(w), initial=0.0))) / self.C

    def beta(self, lam):
        return box_hyperplane_projection(self.w, self.y, lam * self.C)[0]

    def value(self, lam):
        b = self.beta(lam)
        return float(np.sum((b - self.w) ** 2) + (lam - self.z) ** 2)

    def slope(self, lam):
        """Derivative of ``value``; evaluated just right of 0 at the origin."""
        return self._slope_curv(lam)[0]

    def _slope_curv(self, lam):
        l = max(lam, self.floor)
        U = l * self.C
        _, tau = box_hyperplane_projection(self.w, self.y, U)
        r = self.w - tau * self.y
        up = r >= U
        free = (r > 0.0) & ~up
        slope = -2.0 * self.C * float(np.sum(r[up] - U)) + 2.0 * (lam - self.z)
        nf = int(free.sum())
        S = float(self.y[up].sum())
        curv = 2.0 + 2.0 * self.C**2 * (float(up.sum()) + (S * S / nf if nf else 0.0))
        return slope, max(curv, 2.0)

    def argmin(self, kappa, q, upper=math.inf, guess=None):
        """Minimizer over ``0 <= l <= upper`` of ``value(l) + kappa * l^q / q``.

        Safeguarded Newton on the derivative, bracketed by bisection.
        """
        def f(l):
            slope, curv = self._slope_curv(l)
            if kappa > 0.0:
                if q == 1.0:
                    slope += kappa
                else:
                    slope += kappa * l ** (q - 1.0)
                    if q != 2.0 and l > 0:
                        curv += kappa * (q - 1.0) * l ** (q - 2.0)
                    elif q == 2.0:
                        curv += kappa
            return slope, curv

        f0, _ = f(0.0)
        if f0 >= 0.0:
            return 0.0
        if math.isfinite(upper):
            fu, _ = f(upper)
            if fu <= 0.0:
                return float(upper)
            hi = upper
        else:
            hi = max(1.0, 2.0 * abs(self.z))
            while f(hi)[0] < 0.0:
                hi *= 2.0
                if hi > 1e30:
                    raise SolverError("task weight unbounded in coupled QP")
        lo = 0.0
        x = 0.5 * (lo + hi) if guess is None or not lo < guess < hi else float(guess)
        tol = 1e-15 * max(1.0, hi)
        last = math.inf
        for _ in range(200):
            fx, dfx = f(x)
            if fx == 0.0:
                return x
            if fx < 0.0:
                lo = x
            else:
                hi = x
            if hi - lo <= tol:
                break
            step = x - fx / dfx
            if abs(step - x) <= 4e-15 * max(1.0, abs(x)):
                return min(max(step, lo), hi)
            # Newton can cycle across kinks of the piecewise-linear slope
            if not lo < step < hi or abs(fx) > 0.5 * last:
                step = 0.5 * (lo + hi)
            last = abs(fx)
            x = step
        return 0.5 * (lo + hi)


def _norm_multiplier(blocks, q, lam0):
    """Multiplier ``kappa > 0`` with ``||lambda(kappa)||_q = 1`` and the weights.

    ``lambda(kappa)`` is non-increasing, so ``h(kappa) = ||lambda||_q^q - 1``
    has a single root; it is found by safeguarded Newton using the implicit
    derivative of each task's stationarity condition, with bisection on a
    bracket as fallback.
    """
    prev = lam0.copy()

    def h(k):
        nonlocal prev
        lam = np.array([b.argmin(k, q, guess=g if g > 0 else None) for b, g in zip(blocks, prev)])
        prev = lam
        val = float(np.sum(lam**q)) - 1.0
        # d lambda_t / d kappa = -lambda_t^(q-1) / f'_t
        deriv = 0.0
        for b, l in zip(blocks, lam):
            if l <= 0.0:
                continue
            _, curv = b._slope_curv(l)
            pen = l ** (q - 1.0)
            if q != 1.0:
                curv += k * (q - 1.0) * l ** (q - 2.0) if q != 2.0 else k
            deriv -= q * l ** (q - 1.0) * pen / curv
        return val, deriv, lam

    lo, hi = 0.0, 1.0
    val, der, lam = h(hi)
    while val > 0.0:
        lo = hi
        hi *= 4.0
        if hi > 1e40:
            raise SolverError("norm multiplier unbounded in coupled QP")
        val, der, lam = h(hi)
    k = hi
    last = math.inf
    for _ in range(200):
        if val == 0.0:
            break
        if val > 0.0:
            lo = k
        else:
            hi = k
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
        step = k - val / der if der < 0.0 else 0.5 * (lo + hi)
        if abs(step - k) <= 4e-15 * max(1.0, k):
            break
        if not lo < step < hi or abs(val) > 0.5 * last:
            step = 0.5 * (lo + hi)
        last = abs(val)
        k = step
        val, der, lam = h(k)
    n = _qnorm(lam, q)
    if n > 1.0:
        lam = lam / n
    return k, lam


def qp_objective(beta, lam, a, c) -> float:
    """``||beta||^2 - beta'a + ||lambda||^2 - lambda'c`` summed over the task blocks."""
    val = sum(float(b @ b - b @ at) for b, at in zip(beta, a))
    lam = np.asarray(lam, dtype=float)
    return val + float(lam @ lam - lam @ np.asarray(c, dtype=float))


def solve_beta_lambda_qp(linear_beta, linear_lambda, C, q, labels, tol=1e-6):
    """Minimize the coupled (beta, lambda) QP of the module docstring.

    ``linear_beta`` is the list of per-task vectors ``a^t``, ``linear_lambda``
    the vector ``c``; ``q = inf`` means the unit box for lambda. Raises
    :class:`SolverError` (carrying the point) when the KKT residual, relative
    to the data scale, exceeds ``tol``.
    """
    a = [np.asarray(v, dtype=float) for v in linear_beta]
    c = np.asarray(linear_lambda, dtype=float)
    labels = [np.asarray(y, dtype=float) for y in labels]
    if not len(a) == len(labels) == c.size:
        raise InputError("inconsistent task counts in coupled QP")
    if q < 1:
        raise InputError("q must be >= 1")
    if C <= 0:
        raise InputError("C must be positive")
    blocks = [_TaskBlock(at / 2.0, ct / 2.0, y, C) for at, ct, y in zip(a, c, labels)]

    kappa = 0.0
    if math.isinf(q):
        lam = np.array([b.argmin(0.0, 1.0, upper=1.0) for b in blocks])
    else:
        lam = np.array([b.argmin(0.0, q) for b in blocks])
        if _qnorm(lam, q) > 1.0:
            kappa, lam = _norm_multiplier(blocks, q, lam)
    beta = [b.beta(l) for b, l in zip(blocks, lam)]
    point = BetaLambdaPoint(beta=beta, lam=lam)
    point.objective = qp_objective(beta, lam, a, c)
    point.kkt_residual = qp_kkt_residual(point, a, c, C, q, labels)
    scale = max(1.0, _scale(a, c))
    if not point.kkt_residual <= tol * scale:
        raise SolverError(
            f"coupled QP KKT residual {point.kkt_residual:.3g} above tolerance",
            best=point,
            residual=point.kkt_residual,
        )
    return point


def _scale(a, c):
    vals = [float(np.max(np.abs(v), initial=0.0)) for v in a]
    vals.append(float(np.max(np.abs(c), initial=0.0)))
    return max(vals)


def qp_kkt_residual(point, a, c, C, q, labels) -> float:
    """Largest KKT violation of the coupled QP at ``point``.

    Checks primal feasibility, that each beta block is the projection of
    ``a^t/2`` for its own box, and that zero lies in the subdifferential of the
    reduced lambda problem (one-sided slopes bracket the multiplier term).
    """
    lam = np.asarray(point.lam, dtype=float)
    res = max(float(np.max(-lam, initial=0.0)), _qnorm(np.maximum(lam, 0.0), q) - 1.0, 0.0)
    blocks = []
    for b, at, ct, y, l in zip(point.beta, a, c, labels, lam):
        res = max(res, abs(float(b @ y)), float(np.max(-b, initial=0.0)),
                  float(np.max(b - l * C, initial=0.0)))
        proj, _ = box_hyperplane_projection(at / 2.0, y, l * C)
        res = max(res, float(np.max(np.abs(proj - b), initial=0.0)))
        blocks.append(_TaskBlock(at / 2.0, ct / 2.0, y, C))

    h = 1e-9
    lo = np.array([blk.slope(max(l - h, 0.0)) for blk, l in zip(blocks, lam)])
    hi = np.array([blk.slope(l + h) for blk, l in zip(blocks, lam)])
    on_sphere = not math.isinf(q) and _qnorm(lam, q) >= 1.0 - 1e-9
    if math.isinf(q):
        at_top = lam >= 1.0 - 1e-12
    else:
        at_top = np.zeros(lam.shape, dtype=bool)
    grad_term = np.zeros_like(lam)
    if on_sphere:
        grad_term = np.ones_like(lam) if q == 1.0 else lam ** (q - 1.0)
        # multiplier estimate from the positive entries
        pos = lam > 1e-12
        kap = 0.0
        if np.any(pos & (grad_term > 0)):
            mid = -(lo + hi) / 2.0
            kap = max(0.0, float(np.median(mid[pos] / grad_term[pos])))
        grad_term = kap * grad_term
    for t, l in enumerate(lam):
        g_lo, g_hi = lo[t] + grad_term[t], hi[t] + grad_term[t]
        if l <= 1e-12:
            res = max(res, -g_hi)  # need slope >= 0 at the lower bound
        elif at_top[t]:
            res = max(res, g_lo)  # need slope <= 0 at the upper bound
        else:
            res = max(res, g_lo, -g_hi, 0.0) if not (g_lo <= 0.0 <= g_hi) else res
    return float(res)
