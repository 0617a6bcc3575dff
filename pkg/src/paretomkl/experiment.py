"""Batch p-sweep driver: repeated splits, C selection, evaluation and CSV reports.

Every grid cell ``(p, repeat)`` is a pure function of the configuration, so
cells can run in worker processes without changing any number in the output.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import logging
import platform
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy
from scipy import stats

from . import data as data_mod
from . import scalarization as sc
from .exceptions import InputError, ParetoMKLError, ParseError, SolverError
from .kernels import GAUSSIAN, LINEAR, POLYNOMIAL, KernelBank, KernelSpec, build_bank, default_bank_specs
from .trainer import ModelState, SolverConfig, predict, train

log = logging.getLogger(__name__)

DEFAULT_P_GRID = ("0.01", "0.02", "0.05", "0.1", "0.2", "0.5", "1", "2", "5", "10", "20", "50", "inf")
__version__ = "0.1.0"


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def parse_kernel_specs(text: str) -> list[KernelSpec]:
    """``"default"`` or a comma list such as ``linear,poly:2,gaussian:0.5``."""
    text = text.strip()
    if text in ("", "default"):
        return default_bank_specs()
    specs = []
    for item in text.split(","):
        kind, _, param = item.strip().partition(":")
        kind = {"polynomial": POLYNOMIAL}.get(kind, kind)
        if kind == LINEAR:
            specs.append(KernelSpec.linear())
        elif kind in (POLYNOMIAL, GAUSSIAN):
            try:
                value = float(param)
            except ValueError:
                raise InputError(f"kernel {item!r} needs a numeric parameter") from None
            specs.append(KernelSpec(kind, value))
        else:
            raise InputError(f"unknown kernel {item!r}")
    return specs


def format_kernel_specs(specs: Sequence[KernelSpec]) -> str:
    out = []
    for spec in specs:
        if spec.kind == LINEAR:
            out.append("linear")
        elif spec.kind == POLYNOMIAL:
            out.append(f"poly:{int(spec.param)}")
        else:
            out.append(f"gaussian:{spec.param!r}")
    return ",".join(out)


def _p_text(p: sc.PParam) -> str:
    short = str(p)
    return short if sc.PParam.parse(short) == p else repr(p.value)


def _split_list(value: str) -> list[str]:
    return [v.strip() for v in value.replace(";", ",").split(",") if v.strip()]


def _to_bool(value: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise InputError(f"not a boolean: {value!r}")


@dataclass
class ExperimentConfig:
    """Everything a sweep depends on.

    ``data`` holds one multi-class file (one-vs-one tasks) or several binary
    files (one task each). ``synthetic = "blobs"`` replaces the files with the
    bundled three-class Gaussian blobs. An empty ``cv_C`` means ``C`` is used
    as is; otherwise C is chosen by ``cv_folds``-fold cross-validation at
    p = 1, once per repeat.
    """

    data: list[str] = field(default_factory=list)
    fmt: str = "dense"
    label_col: int = -1
    header: bool = False
    classes: list[int] = field(default_factory=list)
    synthetic: str = ""
    blob_size: int = 200
    blob_seed: int = 0
    scaling: str = "global"
    train_fraction: float = 0.05
    repeats: int = 20
    seed: int = 0
    p_grid: list[sc.PParam] = field(default_factory=lambda: [sc.PParam.parse(p) for p in DEFAULT_P_GRID])
    s: float = 1.1
    C: float = 1.0
    cv_C: list[float] = field(default_factory=list)
    cv_folds: int = 5
    kernels: str = "default"
    tol: float = 1e-3
    max_iter: int = 10000
    out: str = "results"
    workers: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not self.p_grid:
            raise InputError("p_grid must not be empty")
        self.p_grid = [sc.PParam.parse(p) for p in self.p_grid]
        if not 0 < self.train_fraction < 1:
            raise InputError("train_fraction must lie in (0, 1)")
        if self.repeats < 1:
            raise InputError("repeats must be >= 1")
        if self.fmt not in ("dense", "sparse"):
            raise InputError(f"unknown format {self.fmt!r}")
        if self.scaling not in ("global", "train"):
            raise InputError("scaling must be 'global' or 'train'")
        if self.synthetic not in ("", "blobs"):
            raise InputError(f"unknown synthetic dataset {self.synthetic!r}")
        if self.s < 1 or self.C <= 0 or self.tol <= 0:
            raise InputError("need s >= 1, C > 0 and tol > 0")
        if any(c <= 0 for c in self.cv_C):
            raise InputError("C candidates must be positive")
        if self.cv_folds < 2:
            raise InputError("cv_folds must be >= 2")
        if self.workers < 1:
            raise InputError("workers must be >= 1")
        parse_kernel_specs(self.kernels)

    # key=value text -------------------------------------------------------

    _LISTS = {"data": str, "classes": int, "cv_C": float}

    def set(self, key: str, value: str) -> None:
        """Assign one field from its text form (used by config files and CLI flags)."""
        key = key.strip().replace("-", "_")
        if key == "format":
            key = "fmt"
        names = {f.name: f for f in dataclasses.fields(self)}
        if key not in names:
            raise InputError(f"unknown configuration key {key!r}")
        value = value.strip()
        try:
            if key == "p_grid":
                parsed = [sc.PParam.parse(v) for v in _split_list(value)]
            elif key in self._LISTS:
                parsed = [self._LISTS[key](v) for v in _split_list(value)]
            elif key == "header":
                parsed = _to_bool(value)
            else:
                parsed = type(getattr(self, key))(value)
        except (ValueError, TypeError) as exc:
            raise InputError(f"bad value for {key}: {value!r} ({exc})") from None
        setattr(self, key, parsed)

    @classmethod
    def from_text(cls, text: str, path=None) -> "ExperimentConfig":
        cfg = cls()
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ParseError(f"expected key = value, got {line!r}", line=lineno, path=path)
            try:
                cfg.set(key, value)
            except InputError as exc:
                raise ParseError(str(exc), line=lineno, path=path) from None
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise InputError(f"no such config file: {path}")
        return cls.from_text(path.read_text(), path=path)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name == "p_grid":
                text = ",".join(_p_text(p) for p in v)
            elif isinstance(v, list):
                text = ",".join(repr(x) if isinstance(x, float) else str(x) for x in v)
            elif isinstance(v, float):
                text = repr(v)
            else:
                text = str(v)
            lines.append(f"{f.name} = {text}")
        return "\n".join(lines) + "\n"

    def solver_config(self, p, C: Optional[float] = None) -> SolverConfig:
        return SolverConfig(p=p, s=self.s, C=self.C if C is None else C, gap_tol=self.tol,
                            max_tseng_iter=self.max_iter)


# ---------------------------------------------------------------------------
# data preparation
# ---------------------------------------------------------------------------


def repeat_seed(seed: int, repeat: int) -> int:
    """Independent split seed for one repeat."""
    return int(np.random.SeedSequence([seed, repeat]).generate_state(1)[0])


def _load_source(config: ExperimentConfig):
    if config.synthetic == "blobs":
        return [data_mod.gaussian_blobs(config.blob_size, seed=config.blob_seed)]
    if not config.data:
        raise InputError("no data given (set data or synthetic)")
    return [data_mod.load(p, config.fmt, config.label_col, config.header) for p in config.data]


def prepare_group(config: ExperimentConfig, repeat: int, sources=None) -> data_mod.TaskGroup:
    """Scaled task group for one repeat."""
    if sources is None:
        sources = _load_source(config)
    seed = repeat_seed(config.seed, repeat)
    if len(sources) == 1:
        ds = sources[0]
        if config.classes:
            ds = ds.subset(config.classes)
        if config.scaling == "global":
            ds, rec = data_mod.scale_01(ds)
            group = data_mod.build_ovo(ds, config.train_fraction, seed=seed)
        else:
            raw = data_mod.build_ovo(ds, config.train_fraction, seed=seed)
            rec = data_mod.fit_scaling(ds.features[raw.train_index])
            scaled = data_mod.Dataset(rec.apply(ds.features), ds.labels, ds.class_names)
            group = data_mod.ovo_from_indices(scaled, raw.train_index)
            group.seed, group.info = seed, raw.info
        group.info["scaling"] = rec
        return group
    if config.scaling == "global":
        sources = [data_mod.scale_01(ds)[0] for ds in sources]
    group = data_mod.build_multitask(sources, config.train_fraction, seed=seed)
    if config.scaling == "train":
        for task in group.tasks:
            task.features = data_mod.fit_scaling(task.X_train).apply(task.features)
    return group


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def ovo_vote(pair_predictions, pairs, classes) -> np.ndarray:
    """Majority vote over pairwise predictions.

    ``pair_predictions[k]`` holds labels in {-1, +1} for pair ``pairs[k] = (a, b)``,
    +1 meaning class ``a``. Ties go to the lowest class id.
    """
    classes = np.asarray(classes)
    pos = {int(c): i for i, c in enumerate(classes)}
    n = len(pair_predictions[0]) if len(pair_predictions) else 0
    votes = np.zeros((n, classes.size), dtype=np.int64)
    for pred, (a, b) in zip(pair_predictions, pairs):
        pred = np.asarray(pred)
        votes[pred > 0, pos[int(a)]] += 1
        votes[pred <= 0, pos[int(b)]] += 1
    # argmax returns the first maximum, i.e. the lowest class id
    return classes[np.argmax(votes, axis=1)]


def evaluate_multiclass(model: ModelState, bank: KernelBank, group: data_mod.TaskGroup):
    """Per-task test accuracy and overall accuracy.

    For one-vs-one groups the overall accuracy is the voting accuracy on the
    shared test set; otherwise it is the mean of the task accuracies.
    """
    acc = np.empty(group.n_tasks)
    for t, task in enumerate(group.tasks):
        acc[t] = np.mean(predict(model, bank, t, task.X_test) == task.y_test) if task.test.size else np.nan
    if group.classes is not None and group.test_features is not None:
        if group.test_labels.size == 0:
            return acc, float("nan")
        preds = [predict(model, bank, t, group.test_features) for t in range(group.n_tasks)]
        voted = ovo_vote(preds, [task.classes for task in group.tasks], group.classes)
        return acc, float(np.mean(voted == group.test_labels))
    return acc, float(np.nanmean(acc))


def _fold_groups(group: data_mod.TaskGroup, folds: int, seed: int):
    """Yield (fold group) pairs; None marks a fold that must be skipped."""
    rng = np.random.default_rng(seed)
    if group.dataset is not None and group.train_index is not None:
        order = rng.permutation(group.train_index)
        parts = np.array_split(order, folds)
        for part in parts:
            rest = np.setdiff1d(group.train_index, part)
            labels = group.dataset.labels
            if part.size == 0 or not np.array_equal(np.unique(labels[rest]), group.classes):
                yield None
                continue
            sub = data_mod.ovo_from_indices(group.dataset, rest, test_index=np.sort(part))
            if any(np.unique(t.y_train).size < 2 for t in sub.tasks):
                yield None
                continue
            yield sub
        return
    splits = [np.array_split(rng.permutation(task.train), folds) for task in group.tasks]
    for k in range(folds):
        tasks = []
        for task, parts in zip(group.tasks, splits):
            held = np.sort(parts[k])
            rest = np.setdiff1d(task.train, held)
            tasks.append(data_mod.BinaryTask(task.features, task.labels, rest, held, task.classes))
        if any(np.unique(t.y_train).size < 2 for t in tasks):
            yield None
        else:
            yield data_mod.TaskGroup(tasks=tasks, seed=seed)


def cross_validate_C(group: data_mod.TaskGroup, specs: Sequence[KernelSpec], candidates: Sequence[float],
                     config: ExperimentConfig, folds: int = 5, seed: int = 0) -> float:
    """k-fold choice of C at p = 1 by mean overall accuracy; ties go to the smaller C."""
    candidates = sorted(float(c) for c in candidates)
    if not candidates:
        raise InputError("no C candidates")
    if len(candidates) == 1:
        return candidates[0]
    fold_groups = [g for g in _fold_groups(group, folds, seed) if g is not None]
    if not fold_groups:
        raise InputError("every cross-validation fold lost a class")
    banks = [build_bank(g.training_sets(), specs) for g in fold_groups]
    scores = []
    for C in candidates:
        accs = []
        for g, bank in zip(fold_groups, banks):
            model = train(bank, config.solver_config(sc.PParam(1.0), C))
            accs.append(evaluate_multiclass(model, bank, g)[1])
        scores.append(float(np.mean(accs)))
    best = int(np.argmax(np.round(scores, 12)))
    log.info("cross-validated C: %s (scores %s)", candidates[best], scores)
    return candidates[best]


def paired_t_test(a, b) -> tuple[float, float]:
    """Two-sided paired t-test on per-repeat numbers; returns (statistic, p-value)."""
    res = stats.ttest_rel(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    return float(res.statistic), float(res.pvalue)


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


@dataclass
class CellResult:
    """Outcome of one (p, repeat) grid cell; ``status`` is ``ok`` or ``failed``."""

    p: sc.PParam
    repeat: int
    C: float
    status: str = "ok"
    message: str = ""
    objective: Optional[np.ndarray] = None
    task_accuracy: Optional[np.ndarray] = None
    overall: float = float("nan")
    theta: Optional[np.ndarray] = None
    lam: Optional[np.ndarray] = None
    eta: Optional[np.ndarray] = None
    iterations: int = 0
    converged: bool = False
    wall_time: float = 0.0
    history: list = field(default_factory=list)


@dataclass
class SweepReport:
    config: ExperimentConfig
    cells: list[CellResult]
    chosen_C: list[float]
    n_tasks: int

    def cell(self, p, repeat: int) -> Optional[CellResult]:
        p = sc.PParam.parse(p)
        for c in self.cells:
            if c.repeat == repeat and c.p == p:
                return c
        return None

    def mean_overall(self, p) -> float:
        vals = [c.overall for c in self.cells if c.p == sc.PParam.parse(p) and c.status == "ok"]
        return float(np.mean(vals)) if vals else float("nan")

    def dcr(self, p, repeat: int) -> Optional[np.ndarray]:
        """Per-task accuracy minus the p = 1 accuracy of the same repeat."""
        cell, base = self.cell(p, repeat), self.cell(1, repeat)
        if cell is None or base is None or cell.status != "ok" or base.status != "ok":
            return None
        return cell.task_accuracy - base.task_accuracy


_SOURCE_CACHE: dict = {}


def _cached(config: ExperimentConfig, repeat: int):
    key = (config.to_text(), repeat)
    if key not in _SOURCE_CACHE:
        _SOURCE_CACHE.clear()
        group = prepare_group(config, repeat)
        bank = build_bank(group.training_sets(), parse_kernel_specs(config.kernels))
        _SOURCE_CACHE[key] = (group, bank)
    return _SOURCE_CACHE[key]


def _select_C(config: ExperimentConfig, repeat: int) -> float:
    if not config.cv_C:
        return config.C
    group, _ = _cached(config, repeat)
    return cross_validate_C(group, parse_kernel_specs(config.kernels), config.cv_C, config,
                            folds=config.cv_folds, seed=repeat_seed(config.seed, repeat))


def run_cell(config: ExperimentConfig, repeat: int, p, C: float) -> CellResult:
    """Train and evaluate one grid cell; failures are captured, not raised."""
    p = sc.PParam.parse(p)
    cell = CellResult(p=p, repeat=repeat, C=C)
    start = time.perf_counter()
    try:
        group, bank = _cached(config, repeat)
        model = train(bank, config.solver_config(p, C))
        cell.task_accuracy, cell.overall = evaluate_multiclass(model, bank, group)
        cell.objective = model.objective_vector
        cell.theta, cell.lam = model.theta, model.lam
        g = model.objective_vector
        cell.eta = sc.eta_weights(g, p) if np.all(g > 0) else np.full(g.size, np.nan)
        cell.iterations, cell.converged = model.iterations, model.converged
        cell.history = list(model.history)
    except (ParetoMKLError, ArithmeticError, np.linalg.LinAlgError) as exc:
        cell.status = "failed"
        cell.message = f"{type(exc).__name__}: {exc}"
        log.warning("cell p=%s repeat=%d failed: %s", p, repeat, cell.message)
        log.debug("%s", traceback.format_exc())
    cell.wall_time = time.perf_counter() - start
    return cell


def _star(args):
    fn, rest = args[0], args[1:]
    return fn(*rest)


def _map(fn, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_star, [(fn, *job) for job in jobs]))


def run_sweep(config: ExperimentConfig) -> SweepReport:
    """Train every (p, repeat) cell; raises SolverError only if all cells fail."""
    config.validate()
    _load_source(config)  # surface data errors before any work
    repeats = list(range(config.repeats))
    chosen = _map(_select_C, [(config, r) for r in repeats], config.workers)
    jobs = [(config, r, p, chosen[r]) for r in repeats for p in config.p_grid]
    cells = _map(run_cell, jobs, config.workers)
    if all(c.status != "ok" for c in cells):
        raise SolverError(f"all {len(cells)} cells failed; first: {cells[0].message}")
    n_tasks = next(c.objective.size for c in cells if c.status == "ok")
    return SweepReport(config=config, cells=cells, chosen_C=chosen, n_tasks=n_tasks)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def _num(x) -> str:
    x = float(x)
    if np.isnan(x):
        return "nan"
    if np.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def report_tables(report: SweepReport) -> dict[str, str]:
    """CSV contents keyed by file name. None depend on wall-clock time."""
    ok = [c for c in report.cells if c.status == "ok"]
    objectives, accuracy, dcr, trace, cells = [], [], [], [], []
    for c in report.cells:
        cells.append([str(c.p), c.repeat, _num(c.C), c.status, c.iterations, int(c.converged), c.message])
    for c in ok:
        d = report.dcr(c.p, c.repeat)
        for t in range(c.objective.size):
            objectives.append([str(c.p), c.repeat, t, _num(c.objective[t]), _num(c.lam[t]), _num(c.eta[t])])
            accuracy.append([str(c.p), c.repeat, t, _num(c.task_accuracy[t]), _num(c.overall)])
            dcr.append([str(c.p), c.repeat, t, _num(c.task_accuracy[t]), "" if d is None else _num(d[t])])
        accuracy.append([str(c.p), c.repeat, "overall", _num(c.overall), _num(c.overall)])
        trace += [[str(c.p), c.repeat, "theta", m, _num(v)] for m, v in enumerate(c.theta)]
        trace += [[str(c.p), c.repeat, "lambda", t, _num(v)] for t, v in enumerate(c.lam)]
        trace += [[str(c.p), c.repeat, "eta", t, _num(v)] for t, v in enumerate(c.eta)]
    return {
        "objectives_vs_p.csv": _csv_text(["p", "repeat", "task", "objective", "lambda", "eta"], objectives),
        "dcr_vs_p.csv": _csv_text(["p", "repeat", "task", "accuracy", "dcr"], dcr),
        "accuracy_table.csv": _csv_text(["p", "repeat", "task", "accuracy", "overall"], accuracy),
        "theta_lambda_trace.csv": _csv_text(["p", "repeat", "block", "index", "value"], trace),
        "cells.csv": _csv_text(["p", "repeat", "C", "status", "iterations", "converged", "message"], cells),
    }


def manifest_text(config: ExperimentConfig) -> str:
    """The configuration as a loadable key=value file; versions go in comments."""
    head = [
        "# paretomkl sweep manifest",
        f"# paretomkl {__version__}",
        f"# python {platform.python_version()}",
        f"# numpy {np.__version__}",
        f"# scipy {scipy.__version__}",
        "# timing.csv is informational and not reproducible",
    ]
    return "\n".join(head) + "\n" + config.to_text()


def emit_report(report: SweepReport, directory) -> list[Path]:
    """Write the CSVs, ``timing.csv`` and ``manifest.txt`` into ``directory``."""
    directory = Path(directory)
    files = dict(report_tables(report))
    files["manifest.txt"] = manifest_text(report.config)
    files["timing.csv"] = _csv_text(
        ["p", "repeat", "wall_time", "iterations"],
        [[str(c.p), c.repeat, f"{c.wall_time:.6f}", c.iterations] for c in report.cells],
    )
    written = []
    try:
        directory.mkdir(parents=True, exist_ok=True)
        for name, text in files.items():
            path = directory / name
            path.write_text(text)
            written.append(path)
    except OSError as exc:
        raise InputError(f"cannot write report to {exc.filename or directory}: {exc.strerror}") from exc
    return written


def summary_text(report: SweepReport) -> str:
    lines = ["p        mean_overall  failed"]
    for p in report.config.p_grid:
        failed = sum(1 for c in report.cells if c.p == p and c.status != "ok")
        lines.append(f"{str(p):<8} {report.mean_overall(p):12.4f}  {failed}")
    return "\n".join(lines)
