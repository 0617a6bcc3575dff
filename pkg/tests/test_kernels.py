import numpy as np
import pytest

from paretomkl.exceptions import InputError
from paretomkl.kernels import (
    GAUSSIAN,
    LINEAR,
    POLYNOMIAL,
    KernelSpec,
    build_bank,
    default_bank_specs,
    eval_kernel,
)


def test_eval_kernel_examples():
    assert eval_kernel(KernelSpec.linear(), [1, 0], [0, 1]) == 0.0
    assert eval_kernel(KernelSpec.gaussian(3.7), [0.2, 0.4], [0.2, 0.4]) == 1.0
    assert eval_kernel(KernelSpec.polynomial(2), [1, 1], [1, 1]) == 9.0


def test_eval_kernel_dimension_mismatch():
    with pytest.raises(InputError):
        eval_kernel(KernelSpec.linear(), [1, 0], [1, 0, 0])


@pytest.mark.parametrize("spec", [KernelSpec.linear(), KernelSpec.polynomial(3), KernelSpec.gaussian(0.5)])
def test_symmetry(spec, rng):
    for _ in range(20):
        x, z = rng.normal(size=3), rng.normal(size=3)
        a, b = eval_kernel(spec, x, z), eval_kernel(spec, z, x)
        if spec.kind == GAUSSIAN:
            assert abs(a - b) <= 1e-15
        else:
            assert a == b


def test_gaussian_range(rng):
    spec = KernelSpec.gaussian(2.0)
    for _ in range(50):
        x, z = rng.normal(size=2), rng.normal(size=2)
        assert 0.0 < eval_kernel(spec, x, z) < 1.0


def test_invalid_specs():
    with pytest.raises(InputError):
        KernelSpec(POLYNOMIAL, 0)
    with pytest.raises(InputError):
        KernelSpec(POLYNOMIAL, 1.5)
    with pytest.raises(InputError):
        KernelSpec(GAUSSIAN, 0.0)
    with pytest.raises(InputError):
        KernelSpec("sigmoid", 1.0)


def test_build_bank_shape_and_values():
    X = np.array([[1.0, 0.0], [0.0, 1.0]])
    bank = build_bank([(X, np.array([1.0, -1.0]))], [KernelSpec.linear()])
    assert bank.n_tasks == 1 and bank.n_kernels == 1
    assert bank.grams[0].shape == (1, 2, 2)
    np.testing.assert_array_equal(bank.grams[0][0], np.eye(2))


def test_build_bank_rejects_non_finite():
    X = np.array([[1.0, np.nan], [0.0, 1.0]])
    with pytest.raises(InputError):
        build_bank([(X, np.array([1.0, -1.0]))], [KernelSpec.linear()])


def test_bank_matches_pointwise_and_is_psd(rng):
    specs = default_bank_specs()
    X = rng.uniform(size=(12, 3))
    bank = build_bank([X], specs)
    for m, spec in enumerate(specs):
        K = bank.grams[0][m]
        ref = np.array([[eval_kernel(spec, a, b) for b in X] for a in X])
        assert np.max(np.abs(K - ref)) <= 1e-12 * max(1.0, np.abs(ref).max())
        assert np.max(np.abs(K - K.T)) <= 1e-12
        assert np.linalg.eigvalsh(K).min() >= -1e-8 * np.trace(K) / K.shape[0]
        i, j = rng.choice(12, size=2, replace=False)
        assert K[i, i] * K[j, j] - K[i, j] ** 2 >= -1e-10


def test_default_bank_order():
    specs = default_bank_specs()
    assert len(specs) == 11
    assert specs[0].kind == LINEAR
    assert specs[1] == KernelSpec.polynomial(2)
    assert specs[2] == KernelSpec.gaussian(2.0**-7)
    assert specs[-1] == KernelSpec.gaussian(2.0**7)


def test_permuted_and_cross(rng):
    X = rng.uniform(size=(5, 2))
    bank = build_bank([X], default_bank_specs()[:4])
    order = [3, 1, 0, 2]
    perm = bank.permuted(order)
    np.testing.assert_array_equal(perm.grams[0], bank.grams[0][order])
    cross = bank.cross(0, X)
    np.testing.assert_allclose(cross, bank.grams[0], atol=1e-12)
    with pytest.raises(InputError):
        bank.cross(0, rng.uniform(size=(2, 3)))
