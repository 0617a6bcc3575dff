"""Command-line entry point: ``paretomkl {sweep,train,predict,eval,selftest}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 solver error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import experiment as ex
from . import scalarization as sc
from .exceptions import ContractError, InputError, ParseError, SolverError
from .kernels import build_bank
from .model_io import load_model, save_model
from .selftest import run_selftest
from .trainer import predict, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SOLVER = 0, 1, 2, 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


# flag name -> config key; values are passed to ExperimentConfig.set as text
_CONFIG_FLAGS = {
    "data": "data", "format": "fmt", "label_col": "label_col", "train_fraction": "train_fraction",
    "repeats": "repeats", "seed": "seed", "p_grid": "p_grid", "s": "s", "C": "C", "cv_C": "cv_C",
    "out": "out", "workers": "workers", "tol": "tol", "kernels": "kernels", "classes": "classes",
    "synthetic": "synthetic", "scaling": "scaling", "header": "header", "blob_size": "blob_size",
    "max_iter": "max_iter",
}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value configuration file; flags override it")
    p.add_argument("--data", nargs="+", help="one multi-class file, or one binary file per task")
    p.add_argument("--format", choices=("dense", "sparse"))
    p.add_argument("--label-col", type=int, help="label column of dense files (negative counts from the end)")
    p.add_argument("--header", action="store_const", const="true", help="dense files start with a header row")
    p.add_argument("--train-fraction", type=float)
    p.add_argument("--repeats", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--p-grid", help="comma list of p values; 'inf' allowed")
    p.add_argument("--s", type=float, help="kernel-weight norm exponent (default 1.1)")
    p.add_argument("--C", type=float, help="SVM cost when not cross-validated")
    p.add_argument("--cv-C", help="comma list of candidate C values for cross-validation at p = 1")
    p.add_argument("--out", help="output directory (sweep) or model file (train)")
    p.add_argument("--workers", type=int)
    p.add_argument("--tol", type=float, help="relative duality-gap tolerance")
    p.add_argument("--kernels", help="'default' or e.g. linear,poly:2,gaussian:0.5")
    p.add_argument("--classes", help="class whitelist, comma separated")
    p.add_argument("--synthetic", choices=("blobs",), help="use the bundled Gaussian-blob data")
    p.add_argument("--blob-size", type=int)
    p.add_argument("--scaling", choices=("global", "train"))
    p.add_argument("--max-iter", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="paretomkl", description="Multi-task multiple kernel learning over a p-sweep.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sweep = sub.add_parser("sweep", help="train every (p, repeat) cell and write CSV reports")
    _add_config_flags(sweep)

    tr = sub.add_parser("train", help="train one model and save it")
    _add_config_flags(tr)
    tr.add_argument("--p", default="1", help="scalarization exponent (default 1)")
    tr.add_argument("--repeat", type=int, default=0, help="which repeat's split to train on")

    pr = sub.add_parser("predict", help="predict labels for unlabelled points")
    pr.add_argument("--model", required=True)
    pr.add_argument("--points", required=True, help="comma-separated feature rows")
    pr.add_argument("--task", type=int, help="only this task")

    ev = sub.add_parser("eval", help="accuracy of a saved model on a labelled file")
    ev.add_argument("--model", required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--format", choices=("dense", "sparse"), default="dense")
    ev.add_argument("--label-col", type=int, default=-1)
    ev.add_argument("--header", action="store_true")
    ev.add_argument("--task", type=int, help="evaluate one binary task (required without class pairs)")

    st = sub.add_parser("selftest", help="compare solvers against their reference oracles")
    st.add_argument("--seed", type=int, default=0)
    return parser


def config_from_args(args) -> ex.ExperimentConfig:
    cfg = ex.ExperimentConfig.from_file(args.config) if args.config else ex.ExperimentConfig()
    for flag, key in _CONFIG_FLAGS.items():
        value = getattr(args, flag, None)
        if value is None:
            continue
        text = ",".join(value) if isinstance(value, list) else str(value)
        cfg.set(key, text)
    cfg.validate()
    return cfg


def _cmd_sweep(args) -> int:
    cfg = config_from_args(args)
    report = ex.run_sweep(cfg)
    files = ex.emit_report(report, cfg.out)
    print(ex.summary_text(report))
    failed = sum(1 for c in report.cells if c.status != "ok")
    print(f"{len(report.cells) - failed}/{len(report.cells)} cells ok; wrote {len(files)} files to {cfg.out}")
    return EXIT_OK


def _cmd_train(args) -> int:
    cfg = config_from_args(args)
    p = sc.PParam.parse(args.p)
    group = ex.prepare_group(cfg, args.repeat)
    bank = build_bank(group.training_sets(), ex.parse_kernel_specs(cfg.kernels))
    C = ex.cross_validate_C(group, bank.specs, cfg.cv_C, cfg, cfg.cv_folds,
                            ex.repeat_seed(cfg.seed, args.repeat)) if cfg.cv_C else cfg.C
    model = train(bank, cfg.solver_config(p, C))
    pairs = [t.classes for t in group.tasks] if group.classes is not None else None
    out = Path(args.out) if args.out else Path("model.txt")
    save_model(model, bank, out, pairs=pairs, scaling=group.info.get("scaling"))
    task_acc, overall = ex.evaluate_multiclass(model, bank, group)
    print(f"p={p} C={C:g} iterations={model.iterations} converged={model.converged}")
    print("objective " + " ".join(f"{v:.6g}" for v in model.objective_vector))
    print("test accuracy " + " ".join(f"{v:.4f}" for v in task_acc) + f" overall {overall:.4f}")
    print(f"model written to {out}")
    return EXIT_OK


def _read_points(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise InputError(f"no such file: {path}")
    rows = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append([float(v) for v in line.split(",")])
        except ValueError:
            raise ParseError("non-numeric value", line=lineno, path=path) from None
        if len(rows[-1]) != len(rows[0]):
            raise ParseError(f"expected {len(rows[0])} fields", line=lineno, path=path)
    if not rows:
        raise InputError(f"{path} contains no points")
    return np.array(rows)


def _scaled(points, scaling):
    return points if scaling is None else scaling.apply(points)


def _cmd_predict(args) -> int:
    model, bank, pairs, scaling = load_model(args.model, extras=True)
    X = _scaled(_read_points(args.points), scaling)
    tasks = range(model.n_tasks) if args.task is None else [args.task]
    preds = [predict(model, bank, t, X) for t in tasks]
    header = [f"task{t}" for t in tasks]
    cols = [np.asarray(p) for p in preds]
    if pairs is not None and args.task is None:
        classes = np.unique(np.array(pairs).ravel())
        header.append("class")
        cols.append(ex.ovo_vote(preds, pairs, classes))
    print(",".join(header))
    for row in zip(*cols):
        print(",".join(str(int(v)) for v in row))
    return EXIT_OK


def _cmd_eval(args) -> int:
    model, bank, pairs, scaling = load_model(args.model, extras=True)
    ds = data_mod.load(args.data, args.format, args.label_col, args.header)
    X = _scaled(ds.features, scaling)
    if args.task is not None or pairs is None:
        if args.task is None:
            if model.n_tasks != 1:
                raise InputError("--task is required for multi-task models without class pairs")
            args.task = 0
        if pairs is not None:
            a, b = pairs[args.task]
            keep = np.isin(ds.labels, (a, b))
            y = np.where(ds.labels[keep] == a, 1, -1)
            X = X[keep]
        else:
            y = data_mod.binary_labels(ds.labels)
        acc = float(np.mean(predict(model, bank, args.task, X) == y))
        print(f"task {args.task} accuracy {acc:.6f} on {y.size} samples")
        return EXIT_OK
    preds = [predict(model, bank, t, X) for t in range(model.n_tasks)]
    classes = np.unique(np.array(pairs).ravel())
    voted = ex.ovo_vote(preds, pairs, classes)
    for t, (a, b) in enumerate(pairs):
        keep = np.isin(ds.labels, (a, b))
        acc = float(np.mean(preds[t][keep] == np.where(ds.labels[keep] == a, 1, -1))) if keep.any() else float("nan")
        print(f"task {t} ({a} vs {b}) accuracy {acc:.6f}")
    print(f"overall accuracy {np.mean(voted == ds.labels):.6f} on {ds.n_samples} samples")
    return EXIT_OK


def _cmd_selftest(args) -> int:
    results = run_selftest(args.seed)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_SOLVER


COMMANDS = {"sweep": _cmd_sweep, "train": _cmd_train, "predict": _cmd_predict, "eval": _cmd_eval,
            "selftest": _cmd_selftest}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(parser.format_usage().rstrip(), file=sys.stderr)
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (SolverError, ContractError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except InputError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
