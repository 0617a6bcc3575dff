import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from paretomkl import oracles
from paretomkl import scalarization as sc
from paretomkl.exceptions import InputError


def test_pparam_conjugates():
    assert sc.PParam(2).q == 2
    assert sc.PParam(1.5).q == pytest.approx(3.0)
    assert sc.PParam(0.5).q == pytest.approx(1.0)
    assert math.isinf(sc.PParam(1).q)
    assert sc.PParam.parse("inf").q == 1.0
    assert str(sc.PParam.parse("inf")) == "inf"
    with pytest.raises(InputError):
        sc.PParam(0)
    with pytest.raises(InputError):
        sc.PParam(-1)


def test_nu_p_examples():
    assert sc.nu_p([3, 4], 2) == pytest.approx(5.0)
    assert sc.nu_p([1, 1], 0.5) == pytest.approx(4.0)
    assert sc.nu_p([2, 7, 5], math.inf) == 7.0
    with pytest.raises(InputError):
        sc.nu_p([1, -1], 2)


def test_nu_p_extreme_exponents():
    g = np.array([3.0, 1e-3, 2.0])
    assert sc.nu_p(g, 1e4) == pytest.approx(3.0, rel=1e-3)
    assert sc.log_nu_p(g, 0.01) == pytest.approx(math.log(sc.nu_p(g, 0.01)), rel=1e-12)


def test_lambda_star_convex_examples():
    np.testing.assert_array_equal(sc.lambda_star_convex([3, 4], 1), [1, 1])
    np.testing.assert_allclose(sc.lambda_star_convex([3, 4], 2), [0.6, 0.8])
    np.testing.assert_array_equal(sc.lambda_star_convex([2, 7, 5], math.inf), [0, 1, 0])
    np.testing.assert_array_equal(sc.lambda_star_convex([7, 7, 5], math.inf), [1, 0, 0])
    with pytest.raises(InputError):
        sc.lambda_star_convex([0, 0], 2)


def test_lambda_star_nonconvex_examples():
    lam = sc.lambda_star_nonconvex([1, 1], 0.5)
    np.testing.assert_allclose(lam, [0.5, 0.5])
    assert sc.weighted_inverse([1, 1], lam) == pytest.approx(4.0)
    lam = sc.lambda_star_nonconvex([1, 4], 0.5)
    np.testing.assert_allclose(lam, [1 / 3, 2 / 3])
    assert sc.weighted_inverse([1, 4], lam) == pytest.approx(9.0)
    lam = sc.lambda_star_nonconvex([0, 2, 3], 0.5)
    assert lam[0] == 0 and np.all(lam[1:] > 0)
    assert sc.weighted_inverse([0, 2, 3], lam) == pytest.approx(sc.nu_p([0, 2, 3], 0.5))


def test_lambda_star_nonconvex_beats_grid(rng):
    for _ in range(5):
        g = rng.uniform(0.1, 3.0, size=2)
        p = 0.3
        lam = sc.lambda_star_nonconvex(g, p)
        q = sc.PParam(p).q
        assert sc.nu_p(lam, q) == pytest.approx(1.0)
        best = oracles.grid_min_weighted_inverse(g, q, n=400)
        assert sc.weighted_inverse(g, lam) <= best + 1e-6


def test_phi_star():
    np.testing.assert_allclose(sc.phi_star([1, 1], 0.3), [0.5, 0.5])
    r = math.sqrt(2)
    np.testing.assert_allclose(sc.phi_star([1, 4], 0.25), [1 / (1 + r), r / (1 + r)])
    g = np.array([0.5, 2.0, 3.0])
    p = 0.3
    phi = sc.phi_star(g, p)
    q = sc.PParam(p).q
    # the substitution that maps the q-ball onto the simplex is phi = lambda^q
    np.testing.assert_allclose(phi, sc.lambda_star_nonconvex(g, p) ** q, atol=1e-12)
    assert not np.allclose(phi, sc.lambda_star_nonconvex(g, p) ** p)
    assert float(g @ phi ** (-1 / q)) == pytest.approx(sc.nu_p(g, p), rel=1e-10)


def test_is_dominated_examples():
    assert sc.is_dominated([2, 2], [1, 1], 0)
    assert not sc.is_dominated([1, 2], [2, 1], 0)
    assert not sc.is_dominated([1, 1], [1, 1], 0)
    assert not sc.is_dominated([1.0, 1.0], [0.9995, 1.0], 1e-3)
    with pytest.raises(InputError):
        sc.is_dominated([1, 2], [1, 2, 3])
    assert sc.mutually_nondominated([[1, 2], [2, 1], [3, 3]], 0) == [(2, 0), (2, 1)]


def test_eta_weights():
    g = np.array([1.0, 2.0, 4.0])
    np.testing.assert_allclose(sc.eta_weights(g, 2), sc.lambda_star_convex(g, 2) / sc.lambda_star_convex(g, 2).sum())
    inv = 1 / sc.lambda_star_nonconvex(g, 0.5)
    np.testing.assert_allclose(sc.eta_weights(g, 0.5), inv / inv.sum())
    np.testing.assert_array_equal(sc.eta_weights(g, math.inf), [0, 0, 1])


positive_g = arrays(np.float64, st.integers(2, 6), elements=st.floats(0.01, 100.0))
p_values = st.sampled_from([0.2, 0.5, 0.8, 1.0, 1.5, 2.0, 5.0, 20.0])


@settings(max_examples=200, deadline=None)
@given(positive_g, p_values, st.floats(0.01, 100.0))
def test_homogeneity(g, p, c):
    assert sc.nu_p(c * g, p) == pytest.approx(c * sc.nu_p(g, p), rel=1e-12)
    np.testing.assert_allclose(sc.lambda_star(c * g, p), sc.lambda_star(g, p), rtol=1e-10)


@settings(max_examples=200, deadline=None)
@given(positive_g, p_values)
def test_largest_weight_at_largest_objective(g, p):
    if np.unique(g).size < g.size:
        return
    lam = sc.lambda_star(g, p)
    if p != 1.0:
        assert int(np.argmax(lam)) == int(np.argmax(g))


@settings(max_examples=200, deadline=None)
@given(positive_g, st.sampled_from([1.0, 1.5, 2.0, 5.0, 20.0]))
def test_dual_norm_identity(g, p):
    lam = sc.lambda_star_convex(g, p)
    assert abs(lam @ g - sc.nu_p(g, p)) <= 1e-10 * max(1.0, sc.nu_p(g, p))
    assert sc.nu_p(lam, sc.PParam(p).q) <= 1 + 1e-10
