import numpy as np
import pytest

from paretomkl import oracles
from paretomkl.exceptions import InputError
from paretomkl.kernels import KernelSpec, build_bank
from paretomkl.svm_dual import TaskDual, compute_objective, decision_values, solve_task

from conftest import two_point_bank


def test_two_point_example():
    bank = two_point_bank()
    d = solve_task(bank, 0, [1.0], C=10.0)
    np.testing.assert_allclose(d.alpha, [2.0, 2.0], atol=1e-6)
    assert d.bias == pytest.approx(-1.0, abs=1e-6)
    assert d.objective == pytest.approx(2.0, abs=1e-6)
    assert d.slack_total == pytest.approx(0.0, abs=1e-9)
    vals = decision_values(d, bank, 0, [1.0], [[0.5], [1.0]])
    assert vals[0] == pytest.approx(0.0, abs=1e-6)
    assert np.sign(vals[1]) == 1


def test_zero_dual_objective():
    bank = two_point_bank()
    d = TaskDual(alpha=np.zeros(2), bias=0.3, objective=0.0, gram_stats=np.zeros(1),
                 slack_total=float(np.sum(np.maximum(0, 1 - np.array([-1.0, 1.0]) * 0.3))))
    assert compute_objective(d, [1.0], 2.0) == pytest.approx(2.0 * (1.3 + 0.7))


def _separable(rng, n=12):
    X = rng.uniform(size=(n, 2))
    y = np.where(X[:, 0] > 0.5, 1.0, -1.0)
    X[:, 0] += 0.2 * y
    return X, y


def test_separable_large_C_has_no_slack(rng):
    X, y = _separable(rng)
    bank = build_bank([(X, y)], [KernelSpec.linear()])
    d = solve_task(bank, 0, [1.0], C=1e4)
    assert d.slack_total <= 1e-6
    assert np.all(decision_values(d, bank, 0, [1.0], X) * y > 0)


def test_kernel_scaling_keeps_predictions(rng):
    X, y = _separable(rng)
    bank = build_bank([(X, y)], [KernelSpec.linear(), KernelSpec.gaussian(1.0)])
    theta = np.array([0.4, 0.6])
    Z = rng.uniform(size=(40, 2))
    d1 = solve_task(bank, 0, theta, C=1e6, tol=1e-10)
    d2 = solve_task(bank, 0, 3.0 * theta, C=1e6, tol=1e-10)
    v1 = decision_values(d1, bank, 0, theta, Z)
    v2 = decision_values(d2, bank, 0, 3.0 * theta, Z)
    np.testing.assert_array_equal(np.sign(v1), np.sign(v2))


def test_invariants_and_strong_duality(rng):
    for _ in range(10):
        n = int(rng.integers(6, 20))
        X = rng.uniform(size=(n, 2))
        y = np.where(rng.uniform(size=n) > 0.5, 1.0, -1.0)
        y[:2] = (1.0, -1.0)
        bank = build_bank([(X, y)], [KernelSpec.linear(), KernelSpec.gaussian(2.0)])
        theta = rng.dirichlet([1.0, 1.0])
        C = float(rng.uniform(0.5, 5.0))
        tol = 1e-8
        d = solve_task(bank, 0, theta, C, tol=tol)
        assert np.all(d.alpha >= 0) and np.all(d.alpha <= C)
        assert abs(d.alpha @ y) <= 1e-8
        assert np.all(d.gram_stats >= -1e-8)
        G = np.einsum("mij,i,j->m", bank.grams[0], d.alpha * y, d.alpha * y)
        np.testing.assert_allclose(d.gram_stats, G, rtol=0, atol=1e-12 * max(1.0, np.abs(G).max()))
        assert abs(d.objective - d.dual_objective) <= 1e-6 * max(1.0, abs(d.objective))
        vals = decision_values(d, bank, 0, theta, X)
        free = (d.alpha > 1e-6) & (d.alpha < C - 1e-6)
        assert np.all(np.abs(y[free] * vals[free] - 1.0) <= 10 * tol + 1e-7)


def test_matches_interior_point_reference(rng):
    for _ in range(5):
        n = int(rng.integers(3, 11))
        X = rng.uniform(size=(n, 2))
        y = np.where(rng.uniform(size=n) > 0.5, 1.0, -1.0)
        y[:2] = (1.0, -1.0)
        bank = build_bank([(X, y)], [KernelSpec.polynomial(2)])
        C = float(rng.uniform(0.1, 10.0))
        d = solve_task(bank, 0, [1.0], C, tol=1e-10)
        ref = oracles.svm_dual_reference(bank.grams[0][0], y, C)
        assert abs(d.dual_objective - ref) <= 1e-6


def test_errors():
    X = np.array([[0.0], [1.0]])
    single = build_bank([(X, np.array([1.0, 1.0]))], [KernelSpec.linear()])
    with pytest.raises(InputError):
        solve_task(single, 0, [1.0], 1.0)
    bank = two_point_bank()
    with pytest.raises(InputError):
        solve_task(bank, 0, [0.0], 1.0)
    d = solve_task(bank, 0, [1.0], 1.0)
    with pytest.raises(InputError):
        decision_values(d, bank, 0, [1.0], [[0.0, 1.0]])
