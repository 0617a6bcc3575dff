"""Dataset loading, [0, 1] scaling and multi-task construction.

Multi-class data become ``c (c - 1) / 2`` one-vs-one binary tasks; datasets
that already consist of several binary problems are read one file per task.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .exceptions import InputError, ParseError


@dataclass
class Dataset:
    """Raw multi-class data: ``features`` is (N, d), ``labels`` integer class ids."""

    features: np.ndarray
    labels: np.ndarray
    class_names: Optional[list[str]] = None

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=float))
        self.labels = np.asarray(self.labels).astype(np.int64).ravel()
        if self.features.shape[0] != self.labels.size:
            raise InputError(
                f"{self.features.shape[0]} feature rows but {self.labels.size} labels"
            )
        if not np.all(np.isfinite(self.features)):
            raise InputError("features must be finite")

    @property
    def n_samples(self) -> int:
        return self.labels.size

    @property
    def classes(self) -> np.ndarray:
        return np.unique(self.labels)

    def subset(self, classes: Sequence[int]) -> "Dataset":
        """Keep only samples of the listed classes (class whitelist)."""
        keep = np.isin(self.labels, list(classes))
        if not keep.any():
            raise InputError(f"no samples of classes {list(classes)}")
        return Dataset(self.features[keep], self.labels[keep], self.class_names)


@dataclass
class BinaryTask:
    """One binary task with labels in {-1, +1} and its train/test split.

    ``classes`` is the originating ``(positive, negative)`` class pair for a
    one-vs-one task, ``None`` otherwise.
    """

    features: np.ndarray
    labels: np.ndarray
    train: np.ndarray
    test: np.ndarray
    classes: Optional[tuple[int, int]] = None
    sample_ids: Optional[np.ndarray] = None

    @property
    def X_train(self) -> np.ndarray:
        return self.features[self.train]

    @property
    def y_train(self) -> np.ndarray:
        return self.labels[self.train]

    @property
    def X_test(self) -> np.ndarray:
        return self.features[self.test]

    @property
    def y_test(self) -> np.ndarray:
        return self.labels[self.test]


@dataclass
class TaskGroup:
    """T binary tasks sharing a split seed.

    For one-vs-one groups, ``test_features``/``test_labels`` hold the held-out
    multi-class samples used for voting evaluation.
    """

    tasks: list[BinaryTask]
    seed: int
    classes: Optional[np.ndarray] = None
    test_features: Optional[np.ndarray] = None
    test_labels: Optional[np.ndarray] = None
    dataset: Optional[Dataset] = None
    train_index: Optional[np.ndarray] = None
    info: dict = field(default_factory=dict)

    @property
    def n_tasks(self) -> int:
        return len(self.tasks)

    def training_sets(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [(t.X_train, t.y_train) for t in self.tasks]


# ---------------------------------------------------------------------------
# loaders
# ---------------------------------------------------------------------------


def _parse_label(token: str, path, line: int) -> int:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"non-numeric label {token!r}", line=line, path=path) from None
    if not math.isfinite(value) or value != int(value):
        raise ParseError(f"label {token!r} is not an integer", line=line, path=path)
    return int(value)


def load_dense(path, label_col: int = -1, header: bool = False, delimiter: str = ",") -> Dataset:
    """Read comma-separated numeric rows; ``label_col`` indexes the label column.

    Blank lines are skipped. Line numbers in errors count physical lines from 1.
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"no such file: {path}")
    rows, labels = [], []
    width = None
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh, delimiter=delimiter), start=1):
            if header and lineno == 1:
                continue
            if not row or all(not c.strip() for c in row):
                continue
            if width is None:
                width = len(row)
                if width < 2:
                    raise ParseError("need at least one feature and a label", line=lineno, path=path)
            elif len(row) != width:
                raise ParseError(f"expected {width} fields, got {len(row)}", line=lineno, path=path)
            col = label_col if label_col >= 0 else width + label_col
            if not 0 <= col < width:
                raise ParseError(f"label column {label_col} out of range", line=lineno, path=path)
            feats = []
            for k, cell in enumerate(row):
                if k == col:
                    continue
                try:
                    feats.append(float(cell))
                except ValueError:
                    raise ParseError(f"non-numeric feature {cell.strip()!r}", line=lineno, path=path) from None
            labels.append(_parse_label(row[col].strip(), path, lineno))
            rows.append(feats)
    if not rows:
        raise InputError(f"{path} contains no data rows")
    return Dataset(np.array(rows), np.array(labels))


def load_sparse(path) -> Dataset:
    """Read ``label index:value ...`` lines with 1-based, strictly increasing indices."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"no such file: {path}")
    entries, labels = [], []
    dim = 0
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split("#", 1)[0].split()
            if not tokens:
                continue
            labels.append(_parse_label(tokens[0], path, lineno))
            row = []
            last = 0
            for tok in tokens[1:]:
                idx, sep, val = tok.partition(":")
                if not sep:
                    raise ParseError(f"malformed entry {tok!r}", line=lineno, path=path)
                try:
                    i = int(idx)
                    v = float(val)
                except ValueError:
                    raise ParseError(f"malformed entry {tok!r}", line=lineno, path=path) from None
                if i <= last:
                    raise ParseError(f"index {i} not increasing", line=lineno, path=path)
                last = i
                row.append((i, v))
            dim = max(dim, last)
            entries.append(row)
    if not labels:
        raise InputError(f"{path} contains no data rows")
    X = np.zeros((len(labels), dim))
    for r, row in enumerate(entries):
        for i, v in row:
            X[r, i - 1] = v
    return Dataset(X, np.array(labels))


def load(path, fmt: str = "dense", label_col: int = -1, header: bool = False) -> Dataset:
    if fmt == "dense":
        return load_dense(path, label_col=label_col, header=header)
    if fmt == "sparse":
        return load_sparse(path)
    raise InputError(f"unknown format {fmt!r}")


# ---------------------------------------------------------------------------
# scaling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Scaling:
    """Per-attribute min-max transform ``(x - low) / span``; ``span = 0`` maps to 0."""

    low: np.ndarray
    span: np.ndarray

    def apply(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.zeros_like(X)
        nz = self.span > 0
        out[:, nz] = (X[:, nz] - self.low[nz]) / self.span[nz]
        return out


def fit_scaling(X) -> Scaling:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    low = X.min(axis=0)
    return Scaling(low=low, span=X.max(axis=0) - low)


def scale_01(data: Dataset) -> tuple[Dataset, Scaling]:
    """Min-max scale every attribute to [0, 1] using statistics of ``data``."""
    rec = fit_scaling(data.features)
    return Dataset(rec.apply(data.features), data.labels.copy(), data.class_names), rec


# ---------------------------------------------------------------------------
# task construction
# ---------------------------------------------------------------------------


def build_ovo(data: Dataset, train_fraction: float, per_class_equal: bool = True,
              seed: int = 0, classes: Optional[Sequence[int]] = None) -> TaskGroup:
    """One-vs-one tasks with a single class-balanced training draw.

    ``floor(train_fraction * n_min)`` samples per class are drawn for training
    (``n_min`` the smallest class count), or that fraction of every class when
    ``per_class_equal`` is false. Every pairwise task trains on the drawn
    samples of its two classes; all other samples form the shared test set.
    In pair ``(i, j)`` with ``i < j`` class ``i`` is labelled +1.
    """
    if not 0 < train_fraction < 1:
        raise InputError("train_fraction must lie in (0, 1)")
    if classes is not None:
        data = data.subset(classes)
    cls, counts = np.unique(data.labels, return_counts=True)
    if cls.size < 2:
        raise InputError("one-vs-one needs at least two classes")
    if counts.min() < 2:
        raise InputError(f"class {cls[np.argmin(counts)]} has fewer than 2 samples")
    rng = np.random.default_rng(seed)
    chosen = {}
    for c, n in zip(cls, counts):
        k = math.floor(train_fraction * (counts.min() if per_class_equal else n))
        k = min(max(k, 1), n - 1)
        idx = np.flatnonzero(data.labels == c)
        chosen[int(c)] = np.sort(rng.choice(idx, size=k, replace=False))
    train_index = np.sort(np.concatenate(list(chosen.values())))
    group = ovo_from_indices(data, train_index)
    group.seed = seed
    group.info = {"per_class_train": {str(c): int(v.size) for c, v in chosen.items()}}
    return group


def ovo_from_indices(data: Dataset, train_index, test_index=None) -> TaskGroup:
    """One-vs-one tasks for given global train (and test) sample indices.

    Test indices default to every sample not used for training.
    """
    train_index = np.sort(np.asarray(train_index, dtype=np.int64))
    is_train = np.zeros(data.n_samples, dtype=bool)
    is_train[train_index] = True
    if test_index is None:
        test_index = np.flatnonzero(~is_train)
    test_index = np.asarray(test_index, dtype=np.int64)
    is_test = np.zeros(data.n_samples, dtype=bool)
    is_test[test_index] = True
    cls = np.unique(data.labels[train_index])
    tasks = []
    for a, b in itertools.combinations(cls.tolist(), 2):
        pair = np.flatnonzero(np.isin(data.labels, (a, b)) & (is_train | is_test))
        y = np.where(data.labels[pair] == a, 1.0, -1.0)
        train = np.flatnonzero(is_train[pair])
        test = np.flatnonzero(is_test[pair])
        tasks.append(BinaryTask(data.features[pair], y, train, test, classes=(a, b), sample_ids=pair))
    return TaskGroup(tasks=tasks, seed=0, classes=cls, test_features=data.features[test_index],
                     test_labels=data.labels[test_index], dataset=data, train_index=train_index)


def binary_labels(labels) -> np.ndarray:
    """Map a two-valued label vector to {-1, +1}.

    {-1, +1} is kept; {0, 1} maps 1 to +1; otherwise the smaller id becomes +1.
    """
    labels = np.asarray(labels)
    values = np.unique(labels)
    if values.size != 2:
        raise InputError(f"binary task needs exactly 2 classes, found {values.size}")
    if set(values.tolist()) == {-1, 1}:
        return labels.astype(float)
    if set(values.tolist()) == {0, 1}:
        return np.where(labels == 1, 1.0, -1.0)
    return np.where(labels == values[0], 1.0, -1.0)


def stratified_split(y, train_fraction: float, rng) -> tuple[np.ndarray, np.ndarray]:
    """``floor(fraction * n)`` training samples, allocated to classes by largest remainder.

    Each class gets ``floor(fraction * n_c)`` or one more (and at least one), so
    per-class counts differ by at most one from their proportional target.
    """
    y = np.asarray(y)
    classes, counts = np.unique(y, return_counts=True)
    target = train_fraction * counts
    take = np.floor(target).astype(int)
    extra = math.floor(train_fraction * y.size) - int(take.sum())
    # stable sort: equal remainders go to the lower class first
    order = np.argsort(-(target - take), kind="stable")
    take[order[:max(extra, 0)]] += 1
    take = np.clip(take, 1, counts)
    train = []
    for c, k in zip(classes, take):
        idx = np.flatnonzero(y == c)
        train.append(rng.choice(idx, size=int(k), replace=False))
    train = np.sort(np.concatenate(train))
    return train, np.setdiff1d(np.arange(len(y)), train)


def build_multitask(task_data, train_fraction: float, seed: int = 0, fmt: str = "dense",
                    label_col: int = -1, header: bool = False) -> TaskGroup:
    """One binary task per file (or per pre-loaded :class:`Dataset`)."""
    if not 0 < train_fraction < 1:
        raise InputError("train_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    tasks = []
    for item in task_data:
        ds = item if isinstance(item, Dataset) else load(item, fmt, label_col, header)
        y = binary_labels(ds.labels)
        train, test = stratified_split(y, train_fraction, rng)
        if np.unique(y[train]).size < 2:
            raise InputError("training split lost a class")
        tasks.append(BinaryTask(ds.features, y, train, test))
    if not tasks:
        raise InputError("no task files given")
    return TaskGroup(tasks=tasks, seed=seed)


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------


def gaussian_blobs(n_per_class: int = 100, seed: int = 0, hard_pair_distance: float = 1.0,
                   dim: int = 2) -> Dataset:
    """Three isotropic classes; classes 0 and 1 overlap (the harder pair).

    Class 2 sits far from both, so its two pairwise tasks are easy.
    """
    rng = np.random.default_rng(seed)
    centers = np.zeros((3, dim))
    centers[1, 0] = hard_pair_distance
    centers[2, :2] = (0.5 * hard_pair_distance, 3.0)
    X = np.concatenate([c + rng.normal(size=(n_per_class, dim)) for c in centers])
    y = np.repeat(np.arange(3), n_per_class)
    return Dataset(X, y)


def tiny_tasks(n: int = 20, n_tasks: int = 2, seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    """Small binary tasks on [0, 1]^2 whose boundaries favour different kernels.

    Task 0 has a noisy linear boundary, task 1 a disc, task 2 a sine curve.
    """
    if not 1 <= n_tasks <= 3:
        raise InputError("tiny_tasks supports 1 to 3 tasks")
    rng = np.random.default_rng(seed)
    out = []
    for t in range(n_tasks):
        while True:
            X = rng.uniform(size=(n, 2))
            if t == 0:
                score = X[:, 0] + 0.2 * rng.normal(size=n) - 0.5
            elif t == 1:
                score = 0.3 - np.linalg.norm(X - 0.5, axis=1) + 0.05 * rng.normal(size=n)
            else:
                score = np.sin(6.0 * X[:, 0]) - (2.0 * X[:, 1] - 1.0)
            y = np.where(score > 0, 1.0, -1.0)
            if 2 <= np.count_nonzero(y > 0) <= n - 2:
                break
        out.append((X, y))
    return out
