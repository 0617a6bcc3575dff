"""Quick oracle comparisons run by ``paretomkl selftest``.

Each check draws random instances, solves them with the production code and
with an independent reference, and reports the worst discrepancy.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import oracles
from . import scalarization as sc
from .kernels import KernelSpec, build_bank
from .projections import ThetaSubproblem, solve_beta_lambda_qp, theta_min_ball_1, theta_min_ball_s
from .svm_dual import solve_task
from .trainer import grad_phi, phi


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst: float
    tol: float
    seconds: float

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"{mark} {self.name}: worst {self.worst:.3g} (tol {self.tol:.0e}, {self.seconds:.2f}s)"


def check_dual_norm(rng, n=200) -> float:
    worst = 0.0
    for _ in range(n):
        p = float(rng.choice([1.0, 1.5, 2.0, 5.0, 20.0]))
        g = rng.exponential(size=int(rng.integers(2, 6)))
        lam = sc.lambda_star_convex(g, p)
        worst = max(worst, abs(lam @ g - sc.nu_p(g, p)) / (1 + sc.nu_p(g, p)))
    return worst


def check_theta_projection(rng, n=100) -> float:
    worst = 0.0
    for _ in range(n):
        s = float(rng.choice([1.1, 1.5, 2.0, 3.0]))
        psi = rng.exponential(size=int(rng.integers(2, 6)))
        prob = ThetaSubproblem(psi, s)
        closed, ref = theta_min_ball_s(prob), oracles.theta_ball_s_bisection(psi, s)
        worst = max(worst, abs(prob.objective(closed) - prob.objective(ref)))
        closed, ref = theta_min_ball_1(prob), oracles.theta_ball_1_bisection(psi, s)
        worst = max(worst, abs(prob.objective(closed) - prob.objective(ref)))
    return worst


def _tiny_labels(rng, n):
    y = rng.choice([-1.0, 1.0], size=n)
    y[0], y[1] = 1.0, -1.0
    return y


def check_coupled_qp(rng, n=20) -> float:
    worst = 0.0
    for _ in range(n):
        T = int(rng.integers(1, 3))
        sizes = [int(rng.integers(2, 4)) for _ in range(T)]
        ys = [_tiny_labels(rng, k) for k in sizes]
        a = [rng.normal(scale=3, size=k) for k in sizes]
        c = rng.normal(scale=2, size=T)
        q = float(rng.choice([1.0, 1.5, 2.0, 3.0, math.inf]))
        C = float(rng.uniform(0.2, 3))
        got = solve_beta_lambda_qp(a, c, C, q, ys).objective
        worst = max(worst, abs(got - oracles.coupled_qp_enumeration(a, c, C, q, ys)))
    return worst


def check_svm(rng, n=10) -> float:
    worst = 0.0
    specs = [KernelSpec.linear(), KernelSpec.gaussian(1.0)]
    for _ in range(n):
        k = int(rng.integers(4, 11))
        X, y = rng.uniform(size=(k, 2)), _tiny_labels(rng, k)
        bank = build_bank([(X, y)], specs)
        theta = rng.dirichlet(np.ones(2))
        C = float(rng.uniform(0.5, 5))
        dual = solve_task(bank, 0, theta, C, tol=1e-10)
        ref = oracles.svm_dual_reference(bank.combined(0, theta), y, C)
        worst = max(worst, abs(dual.dual_objective - ref))
    return worst


def check_gradient(rng, n=10) -> float:
    worst = 0.0
    specs = [KernelSpec.linear(), KernelSpec.polynomial(2)]
    for _ in range(n):
        tasks = [(rng.uniform(size=(5, 2)), _tiny_labels(rng, 5)) for _ in range(2)]
        bank = build_bank(tasks, specs)
        theta = rng.uniform(0.1, 1, size=2)
        beta = [rng.uniform(0, 1, size=5) for _ in range(2)]
        lam = rng.uniform(0.2, 1, size=2)
        u = np.concatenate([theta, *beta, lam])

        def f(v):
            return phi(v[:2], [v[2:7], v[7:12]], v[12:], bank)

        gt, gb, gl = grad_phi(theta, beta, lam, bank)
        analytic = np.concatenate([gt, *gb, gl])
        fd = oracles.central_difference(f, u)
        worst = max(worst, float(np.max(np.abs(analytic - fd)) / (1 + np.max(np.abs(fd)))))
    return worst


CHECKS = [
    ("dual-norm identity", check_dual_norm, 1e-10),
    ("kernel-weight subproblem", check_theta_projection, 1e-8),
    ("coupled QP", check_coupled_qp, 1e-4),
    ("SVM dual", check_svm, 1e-6),
    ("gradient", check_gradient, 1e-5),
]


def run_selftest(seed: int = 0) -> list[CheckResult]:
    results = []
    for name, fn, tol in CHECKS:
        rng = np.random.default_rng(seed)
        start = time.perf_counter()
        worst = fn(rng)
        results.append(CheckResult(name, bool(worst <= tol), worst, tol, time.perf_counter() - start))
    return results
