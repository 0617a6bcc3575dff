"""Kernel functions and the per-task Gram matrix bank."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import InputError

LINEAR = "linear"
POLYNOMIAL = "poly"
GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class KernelSpec:
    """One base kernel.

    ``param`` is the degree for polynomial kernels and the spread ``gamma``
    in ``exp(-gamma * ||x - z||^2)`` for Gaussian kernels; unused for linear.
    Polynomial kernels are inhomogeneous: ``(x'z + 1) ** degree``.
    """

    kind: str
    param: float = 0.0

    def __post_init__(self):
        if self.kind == POLYNOMIAL:
            if self.param < 1 or int(self.param) != self.param:
                raise InputError(f"polynomial degree must be a positive integer, got {self.param}")
        elif self.kind == GAUSSIAN:
            if not self.param > 0:
                raise InputError(f"gaussian spread must be positive, got {self.param}")
        elif self.kind != LINEAR:
            raise InputError(f"unknown kernel kind {self.kind!r}")

    @classmethod
    def linear(cls) -> "KernelSpec":
        return cls(LINEAR, 0.0)

    @classmethod
    def polynomial(cls, degree: int) -> "KernelSpec":
        return cls(POLYNOMIAL, float(degree))

    @classmethod
    def gaussian(cls, spread: float) -> "KernelSpec":
        return cls(GAUSSIAN, float(spread))

    def __str__(self):
        if self.kind == LINEAR:
            return "linear"
        if self.kind == POLYNOMIAL:
            return f"poly({int(self.param)})"
        return f"gaussian({self.param:.17g})"

    def matrix(self, X: np.ndarray, Z: np.ndarray) -> np.ndarray:
        """Cross-kernel matrix ``K[i, j] = k(X[i], Z[j])``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        if X.shape[1] != Z.shape[1]:
            raise InputError(f"dimension mismatch: {X.shape[1]} vs {Z.shape[1]}")
        if self.kind == GAUSSIAN:
            sq = (
                np.einsum("ij,ij->i", X, X)[:, None]
                + np.einsum("ij,ij->i", Z, Z)[None, :]
                - 2.0 * X @ Z.T
            )
            np.maximum(sq, 0.0, out=sq)
            return np.exp(-self.param * sq)
        inner = X @ Z.T
        if self.kind == LINEAR:
            return inner
        return (inner + 1.0) ** int(self.param)


def eval_kernel(spec: KernelSpec, x, z) -> float:
    """Evaluate ``k(x, z)`` for two single feature vectors."""
    x = np.asarray(x, dtype=float).ravel()
    z = np.asarray(z, dtype=float).ravel()
    if x.shape != z.shape:
        raise InputError(f"dimension mismatch: {x.shape[0]} vs {z.shape[0]}")
    if spec.kind == LINEAR:
        return float(x @ z)
    if spec.kind == POLYNOMIAL:
        return float((x @ z + 1.0) ** int(spec.param))
    d = x - z
    return float(np.exp(-spec.param * (d @ d)))


def default_bank_specs() -> list[KernelSpec]:
    """The 11-kernel bank: linear, quadratic, and nine Gaussian spreads."""
    spreads = [2.0**e for e in (-7, -5, -3, -1, 0, 1, 3, 5, 7)]
    return [KernelSpec.linear(), KernelSpec.polynomial(2)] + [
        KernelSpec.gaussian(g) for g in spreads
    ]


@dataclass
class KernelBank:
    """Gram matrices ``grams[t][m]`` for T tasks and M kernels.

    ``samples[t]`` holds the training features of task t, needed to evaluate
    kernels between training and query points. Treat as immutable.
    """

    specs: list[KernelSpec]
    grams: list[np.ndarray]  # per task an (M, N_t, N_t) stack
    samples: list[np.ndarray]
    labels: list[np.ndarray] = field(default_factory=list)

    @property
    def n_tasks(self) -> int:
        return len(self.grams)

    @property
    def n_kernels(self) -> int:
        return len(self.specs)

    def task_size(self, t: int) -> int:
        return self.grams[t].shape[1]

    def combined(self, t: int, theta) -> np.ndarray:
        """``sum_m theta_m K_m^t``; kernels with zero weight are skipped."""
        theta = np.asarray(theta, dtype=float)
        stack = self.grams[t]
        active = np.flatnonzero(theta != 0.0)
        if active.size == 0:
            return np.zeros(stack.shape[1:])
        return np.tensordot(theta[active], stack[active], axes=1)

    def cross(self, t: int, points) -> np.ndarray:
        """(M, N_t, n_points) stack of kernel values between training and query points."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        train = self.samples[t]
        if points.shape[1] != train.shape[1]:
            raise InputError(
                f"dimension mismatch: query has {points.shape[1]} features, task {t} has {train.shape[1]}"
            )
        return np.stack([spec.matrix(train, points) for spec in self.specs])

    def permuted(self, order: Sequence[int]) -> "KernelBank":
        """Same bank with kernels reordered."""
        order = list(order)
        return KernelBank(
            specs=[self.specs[i] for i in order],
            grams=[g[order] for g in self.grams],
            samples=self.samples,
            labels=self.labels,
        )


def build_bank(tasks, specs: Sequence[KernelSpec]) -> KernelBank:
    """Materialize all T*M Gram matrices.

    ``tasks`` is a sequence of ``(X, y)`` pairs (``y`` may be ``None``) or of
    bare feature matrices.
    """
    specs = list(specs)
    if not specs:
        raise InputError("at least one kernel is required")
    grams, samples, labels = [], [], []
    for t, task in enumerate(tasks):
        if isinstance(task, tuple):
            X, y = task
        else:
            X, y = task, None
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[0] == 0:
            raise InputError(f"task {t} is empty")
        if not np.all(np.isfinite(X)):
            raise InputError(f"task {t} has non-finite features")
        stack = np.stack([spec.matrix(X, X) for spec in specs])
        # symmetrize exactly; X @ X.T is symmetric only up to rounding
        stack = 0.5 * (stack + np.transpose(stack, (0, 2, 1)))
        grams.append(stack)
        samples.append(X)
        labels.append(None if y is None else np.asarray(y, dtype=float))
    return KernelBank(specs=specs, grams=grams, samples=samples, labels=labels)
