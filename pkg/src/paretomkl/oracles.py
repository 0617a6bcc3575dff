"""Independent reference solvers used by the test suite and ``selftest``.

Each routine reaches its answer by a different route than the production
code: brute-force grids, plain bisection, exhaustive active-set enumeration,
central differences, or a general-purpose interior-point QP.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.optimize import minimize_scalar

from .exceptions import InputError


# ---------------------------------------------------------------------------
# task weights
# ---------------------------------------------------------------------------


def ball_boundary_grid(T: int, q: float, n: int = 200) -> np.ndarray:
    """Points of the non-negative unit ``q``-sphere from a grid of ``n`` per axis.

    The first ``T - 1`` coordinates run over an ``n``-point grid on [0, 1] and
    the last one is the largest value keeping ``||lambda||_q <= 1``. Points
    outside the ball are dropped.
    """
    axis = np.linspace(0.0, 1.0, n)
    if T == 1:
        return np.ones((1, 1))
    mesh = np.stack(np.meshgrid(*([axis] * (T - 1)), indexing="ij"), axis=-1).reshape(-1, T - 1)
    rest = 1.0 - np.sum(mesh**q, axis=1)
    ok = rest >= 0
    last = np.maximum(rest[ok], 0.0) ** (1.0 / q)
    return np.column_stack([mesh[ok], last])


def grid_min_weighted_inverse(g, q: float, n: int = 200) -> float:
    """Grid minimum of ``sum g_t / lambda_t`` over the ``q``-ball.

    The objective decreases in every coordinate, so the minimum over the ball
    lies on its boundary and the grid of :func:`ball_boundary_grid` suffices.
    """
    g = np.asarray(g, dtype=float)
    pts = ball_boundary_grid(g.size, q, n)
    with np.errstate(divide="ignore"):
        vals = np.sum(np.where(g > 0, g / pts, 0.0), axis=1)
    return float(np.min(vals))


def random_ball_points(rng, T: int, q: float, count: int) -> np.ndarray:
    """Random feasible points of ``{lambda >= 0, ||lambda||_q <= 1}``."""
    raw = rng.uniform(size=(count, T))
    if math.isinf(q):
        return raw
    norms = np.sum(raw**q, axis=1) ** (1.0 / q)
    radius = rng.uniform(size=count) ** (1.0 / T)
    return raw / norms[:, None] * radius[:, None]


# ---------------------------------------------------------------------------
# kernel-weight subproblems
# ---------------------------------------------------------------------------


def theta_ball_s_bisection(psi, s: float, iters: int = 200) -> np.ndarray:
    """``min (1/s) sum theta^s - psi'theta`` over the s-ball by multiplier bisection.

    Stationarity gives ``theta = (psi / nu)^(1/(s-1))`` with ``nu >= 1``; nu is
    bisected on ``sum theta^s = 1`` in log space.
    """
    psi = np.asarray(psi, dtype=float)
    r = 1.0 / (s - 1.0)

    def norm_s(log_nu):
        with np.errstate(over="ignore", divide="ignore"):
            return np.sum(np.exp(r * s * (np.log(psi) - log_nu)))

    if not np.any(psi > 0):
        return np.zeros_like(psi)
    if norm_s(0.0) <= 1.0:
        return np.exp(r * np.log(psi))
    lo, hi = 0.0, 1.0
    while norm_s(hi) > 1.0:
        hi *= 2.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if norm_s(mid) > 1.0:
            lo = mid
        else:
            hi = mid
    with np.errstate(divide="ignore"):
        return np.exp(r * (np.log(psi) - hi))


def theta_ball_1_bisection(psi, s: float, iters: int = 200) -> np.ndarray:
    """Same objective over the 1-ball: ``theta = max(psi - mu, 0)^(1/(s-1))``."""
    psi = np.asarray(psi, dtype=float)
    r = 1.0 / (s - 1.0)

    def theta(mu):
        return np.maximum(psi - mu, 0.0) ** r

    if np.sum(theta(0.0)) <= 1.0:
        return theta(0.0)
    lo, hi = 0.0, float(psi.max())
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if np.sum(theta(mid)) > 1.0:
            lo = mid
        else:
            hi = mid
    return theta(hi)


def theta_grid_min(psi, s: float, ball: float, n: int = 2001) -> float:
    """Grid minimum of the kernel-weight objective for two kernels.

    ``ball`` is the norm of the constraint (s or 1). The grid covers the
    interior of the ball as well as its boundary.
    """
    psi = np.asarray(psi, dtype=float)
    if psi.size != 2:
        raise InputError("grid oracle is limited to two kernels")
    axis = np.linspace(0.0, 1.0, n)
    t1, t2 = np.meshgrid(axis, axis, indexing="ij")
    feasible = t1**ball + t2**ball <= 1.0 + 1e-15
    obj = (t1**s + t2**s) / s - psi[0] * t1 - psi[1] * t2
    best = obj[feasible].min()
    # the boundary arc, parametrized by the first coordinate
    b1 = np.linspace(0.0, 1.0, 20 * n)
    b2 = np.maximum(1.0 - b1**ball, 0.0) ** (1.0 / ball)
    arc = (b1**s + b2**s) / s - psi[0] * b1 - psi[1] * b2
    return float(min(best, arc.min()))


# ---------------------------------------------------------------------------
# coupled (beta, lambda) QP by exhaustive enumeration
# ---------------------------------------------------------------------------


def _active_set_pieces(a, y, C):
    """All active-set candidates of ``min ||b||^2 - a'b``, ``y'b = 0``, ``0 <= b <= C lam``.

    For each assignment of coordinates to {zero, upper, free} the stationary
    point is affine in lam, ``b = b0 + lam * b1``, and feasible on an interval
    of lam. Returns ``(b0, b1, lo, hi)`` tuples with non-empty intervals.
    """
    n = a.size
    pieces = []
    for states in itertools.product((0, 1, 2), repeat=n):
        states = np.array(states)
        free = states == 2
        up = states == 1
        b0 = np.zeros(n)
        b1 = np.where(up, C, 0.0)
        nf = int(free.sum())
        if nf == 0:
            if abs(float(y[up].sum())) > 0:
                lo, hi = 0.0, 0.0
            else:
                lo, hi = 0.0, math.inf
            pieces.append((b0, b1, lo, hi))
            continue
        # sum_free y_i (a_i + mu y_i)/2 = -lam C sum_up y_i
        # mu = (-2 lam C sum_up y - sum_free y a) / nf
        su = float(y[up].sum())
        sa = float(y[free] @ a[free])
        mu0, mu1 = -sa / nf, -2.0 * C * su / nf
        b0 = b0.copy()
        b0[free] = 0.5 * (a[free] + mu0 * y[free])
        b1 = b1.copy()
        b1[free] = 0.5 * mu1 * y[free]
        # 0 <= b0 + lam b1 <= C lam for free coordinates, lam >= 0
        lo, hi = 0.0, math.inf
        cons = [(b0[free], b1[free]), (-b0[free], C - b1[free])]
        ok = True
        for u, v in cons:
            for ui, vi in zip(u, v):
                # ui + vi lam >= 0
                if abs(vi) < 1e-15:
                    if ui < -1e-12:
                        ok = False
                elif vi > 0:
                    lo = max(lo, -ui / vi)
                else:
                    hi = min(hi, -ui / vi)
        if ok and lo <= hi + 1e-12:
            pieces.append((b0, b1, lo, max(lo, hi)))
    return pieces


def _piece_quadratic(piece, a, c):
    """Coefficients ``(k2, k1, k0)`` of ``||b||^2 - a'b + lam^2 - c lam`` on a piece."""
    b0, b1, _, _ = piece
    k2 = float(b1 @ b1) + 1.0
    k1 = float(2.0 * b0 @ b1 - a @ b1) - c
    k0 = float(b0 @ b0 - a @ b0)
    return k2, k1, k0


def _quad_min_interval(k2, k1, k0, lo, hi):
    x = min(max(-k1 / (2.0 * k2), lo), hi)
    return k2 * x * x + k1 * x + k0, x


def coupled_qp_enumeration(linear_beta, linear_lambda, C, q, labels, arc_points: int = 4001):
    """Optimal value of the coupled (beta, lambda) QP for ``T <= 2``, ``N_t <= 3``.

    Every combination of per-task active sets is solved: the objective on a
    combination is a separable convex quadratic in lambda on a box. The box
    optimum is kept when it lies in the q-ball; otherwise the norm constraint
    is active and the minimum is taken over the ball's boundary arc (a dense
    grid refined by bounded scalar minimization).
    """
    a = [np.asarray(v, dtype=float) for v in linear_beta]
    c = np.asarray(linear_lambda, dtype=float)
    ys = [np.asarray(y, dtype=float) for y in labels]
    T = len(a)
    if T > 2 or any(v.size > 3 for v in a):
        raise InputError("enumeration oracle is limited to T <= 2 and N_t <= 3")
    per_task = []
    for t in range(T):
        quads = []
        for piece in _active_set_pieces(a[t], ys[t], C):
            k2, k1, k0 = _piece_quadratic(piece, a[t], c[t])
            quads.append((k2, k1, k0, piece[2], min(piece[3], 1.0)))
        per_task.append([qd for qd in quads if qd[3] <= qd[4] + 1e-15])
    if T == 1 or math.isinf(q):
        total = 0.0
        for quads in per_task:
            total += min(_quad_min_interval(k2, k1, k0, lo, hi)[0] for k2, k1, k0, lo, hi in quads)
        return total
    best = math.inf
    for (p2, p1, p0, plo, phi_), (r2, r1, r0, rlo, rhi) in itertools.product(*per_task):
        v1, x1 = _quad_min_interval(p2, p1, p0, plo, phi_)
        v2, x2 = _quad_min_interval(r2, r1, r0, rlo, rhi)
        if x1**q + x2**q <= 1.0 + 1e-12:
            best = min(best, v1 + v2)
            continue
        # norm constraint active: x2 = (1 - x1^q)^(1/q), both inside their intervals
        lo1 = plo
        hi1 = min(phi_, 1.0)
        # x2 in [rlo, rhi] translates to x1 in [(1 - rhi^q)^(1/q), (1 - rlo^q)^(1/q)]
        if rhi < 1.0:
            lo1 = max(lo1, (1.0 - rhi**q) ** (1.0 / q))
        if rlo > 0.0:
            hi1 = min(hi1, (max(1.0 - rlo**q, 0.0)) ** (1.0 / q))
        if lo1 > hi1:
            continue

        def arc(x):
            x2a = np.maximum(1.0 - np.asarray(x) ** q, 0.0) ** (1.0 / q)
            return p2 * x * x + p1 * x + p0 + r2 * x2a * x2a + r1 * x2a + r0

        xs = np.linspace(lo1, hi1, arc_points)
        vals = arc(xs)
        k = int(np.argmin(vals))
        val = float(vals[k])
        if hi1 > lo1:
            left, right = xs[max(k - 1, 0)], xs[min(k + 1, xs.size - 1)]
            res = minimize_scalar(lambda x: float(arc(x)), bounds=(left, right), method="bounded",
                                  options={"xatol": 1e-13})
            val = min(val, float(res.fun))
        best = min(best, val)
    return best


# ---------------------------------------------------------------------------
# SVM dual reference and finite differences
# ---------------------------------------------------------------------------


def svm_dual_reference(K, y, C) -> float:
    """Optimal value of ``max 1'a - 1/2 a'YKYa`` s.t. ``y'a = 0``, ``0 <= a <= C``.

    Uses the cvxopt interior-point QP solver at tight tolerances.
    """
    from cvxopt import matrix, solvers

    K = np.asarray(K, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.size
    Q = K * np.outer(y, y)
    Q = 0.5 * (Q + Q.T) + 1e-13 * np.eye(n)
    P = matrix(Q)
    qv = matrix(-np.ones(n))
    G = matrix(np.vstack([-np.eye(n), np.eye(n)]))
    h = matrix(np.concatenate([np.zeros(n), np.full(n, float(C))]))
    A = matrix(y.reshape(1, -1))
    b = matrix(0.0)
    opts = {"show_progress": False, "abstol": 1e-13, "reltol": 1e-13, "feastol": 1e-13,
            "maxiters": 200}
    sol = solvers.qp(P, qv, G, h, A, b, options=opts)
    alpha = np.clip(np.array(sol["x"]).ravel(), 0.0, C)
    Kfull = K * np.outer(y, y)
    return float(alpha.sum() - 0.5 * alpha @ Kfull @ alpha)


def central_difference(f, x, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function of a flat vector."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        step = h * max(1.0, abs(x[i]))
        e[i] = step
        g[i] = (f(x + e) - f(x - e)) / (2.0 * step)
    return g
