"""The nu_p family of task-objective aggregates and their optimal weights.

``nu_p(g) = (sum_t g_t ** p) ** (1 / p)`` for ``p in (0, inf]``. For p >= 1 it is
the L_p norm and its maximizing weights over the dual-norm ball are given in
closed form; for 0 < p < 1 it is the minimum of ``g' lambda^{-1}`` over the
``q = p / (1 - p)`` ball, again in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import InputError


@dataclass(frozen=True)
class PParam:
    """Scalarization exponent ``p`` together with its conjugate ``q``.

    For p > 1, ``q = p / (p - 1)``; for 0 < p < 1, ``q = p / (1 - p)``.
    p = 1 pairs with q = inf and p = inf with q = 1.
    """

    value: float

    def __post_init__(self):
        v = float(self.value)
        if not v > 0 or math.isnan(v):
            raise InputError(f"p must be positive, got {self.value}")
        object.__setattr__(self, "value", v)

    @classmethod
    def parse(cls, text) -> "PParam":
        if isinstance(text, PParam):
            return text
        if isinstance(text, str) and text.strip().lower() in ("inf", "infinity", "+inf"):
            return cls(math.inf)
        return cls(float(text))

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.value)

    @property
    def convex(self) -> bool:
        return self.value >= 1.0

    @property
    def q(self) -> float:
        p = self.value
        if math.isinf(p):
            return 1.0
        if p == 1.0:
            return math.inf
        if p > 1.0:
            return p / (p - 1.0)
        return p / (1.0 - p)

    def __str__(self):
        return "inf" if self.is_infinite else f"{self.value:g}"


def _as_p(p) -> float:
    return p.value if isinstance(p, PParam) else float(p)


def _check_nonneg(g) -> np.ndarray:
    g = np.asarray(g, dtype=float).ravel()
    if g.size == 0:
        raise InputError("empty objective vector")
    if np.any(g < 0) or not np.all(np.isfinite(g)):
        raise InputError("objective vector must be finite and non-negative")
    return g


def _check_nonzero(g) -> np.ndarray:
    g = _check_nonneg(g)
    if not np.any(g > 0):
        raise InputError("objective vector must not be identically zero")
    return g


def nu_p(g, p) -> float:
    """``(sum g_t^p)^(1/p)``; the maximum for p = inf.

    Evaluated with the largest entry factored out, so large p does not overflow
    and small p does not underflow.
    """
    g = _check_nonneg(g)
    p = _as_p(p)
    if p <= 0:
        raise InputError("p must be positive")
    top = g.max()
    if math.isinf(p):
        return float(top)
    if top == 0.0:
        return 0.0
    ratio = g / top
    with np.errstate(divide="ignore"):
        s = np.sum(ratio**p)
    return float(top * s ** (1.0 / p))


def log_nu_p(g, p) -> float:
    """``log nu_p(g)``; usable when nu_p itself overflows (p close to 0)."""
    g = _check_nonzero(g)
    p = _as_p(p)
    if math.isinf(p):
        return float(math.log(g.max()))
    pos = g[g > 0]
    logs = p * np.log(pos)
    m = logs.max()
    return float((m + math.log(np.sum(np.exp(logs - m)))) / p)


def lambda_star_convex(g, p) -> np.ndarray:
    """Maximizer of ``lambda' g`` over ``{lambda >= 0, ||lambda||_q <= 1}``, p >= 1.

    p = 1 gives all ones, p = inf the indicator of the (lowest-index) argmax,
    otherwise ``(g / ||g||_p) ** (p - 1)``.
    """
    g = _check_nonzero(g)
    p = _as_p(p)
    if p < 1:
        raise InputError(f"lambda_star_convex needs p >= 1, got {p}")
    if p == 1.0:
        return np.ones_like(g)
    if math.isinf(p):
        lam = np.zeros_like(g)
        lam[int(np.argmax(g))] = 1.0
        return lam
    return (g / nu_p(g, p)) ** (p - 1.0)


def lambda_star_nonconvex(g, p) -> np.ndarray:
    """Minimizer of ``g' lambda^{-1}`` over the ``q = p/(1-p)`` ball, 0 < p < 1.

    ``lambda* = (g / nu_p(g)) ** (1 - p)``, computed in log space. Entries with
    ``g_t = 0`` get ``lambda_t = 0`` (their term is read as 0/0 = 0).
    """
    g = _check_nonzero(g)
    p = _as_p(p)
    if not 0 < p < 1:
        raise InputError(f"lambda_star_nonconvex needs 0 < p < 1, got {p}")
    lam = np.zeros_like(g)
    pos = g > 0
    lam[pos] = np.exp((1.0 - p) * (np.log(g[pos]) - log_nu_p(g, p)))
    return lam


def phi_star(g, p) -> np.ndarray:
    """Simplex weights ``g^p / sum g^p`` minimizing ``g' phi^{-1/q}``."""
    g = _check_nonzero(g)
    p = _as_p(p)
    if not 0 < p < 1:
        raise InputError(f"phi_star needs 0 < p < 1, got {p}")
    phi = np.zeros_like(g)
    pos = g > 0
    logs = p * np.log(g[pos])
    w = np.exp(logs - logs.max())
    phi[pos] = w / w.sum()
    return phi


def weighted_inverse(g, lam) -> float:
    """``sum_t g_t / lambda_t`` with the convention 0/0 = 0."""
    g = np.asarray(g, dtype=float)
    lam = np.asarray(lam, dtype=float)
    pos = g > 0
    if np.any(lam[pos] <= 0):
        return math.inf
    return float(np.sum(g[pos] / lam[pos]))


def lambda_star(g, p) -> np.ndarray:
    """Branch dispatch between the convex and non-convex weight formulas."""
    return lambda_star_convex(g, p) if _as_p(p) >= 1 else lambda_star_nonconvex(g, p)


def eta_weights(g, p) -> np.ndarray:
    """Diagnostic task influence ``eta_t`` proportional to ``g_t ** (p - 1)``.

    Equals lambda for p >= 1 and 1/lambda for p < 1, normalized to sum to one.
    """
    g = _check_nonzero(g)
    p = _as_p(p)
    if math.isinf(p):
        eta = np.zeros_like(g)
        eta[int(np.argmax(g))] = 1.0
        return eta
    eta = np.zeros_like(g)
    pos = g > 0
    logs = (p - 1.0) * np.log(g[pos])
    w = np.exp(logs - logs.max())
    eta[pos] = w / w.sum()
    return eta


def is_dominated(a, b, tol: float = 0.0) -> bool:
    """True when ``b`` Pareto-dominates ``a`` beyond the tolerance band.

    Requires ``b <= a + tol`` everywhere and ``b < a - tol`` somewhere.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise InputError(f"length mismatch: {a.size} vs {b.size}")
    return bool(np.all(b <= a + tol) and np.any(b < a - tol))


def mutually_nondominated(vectors, tol: float = 1e-3) -> list[tuple[int, int]]:
    """Ordered pairs ``(i, j)`` where vector j dominates vector i; empty when none do."""
    vectors = [np.asarray(v, dtype=float) for v in vectors]
    return [
        (i, j)
        for i, a in enumerate(vectors)
        for j, b in enumerate(vectors)
        if i != j and is_dominated(a, b, tol)
    ]
