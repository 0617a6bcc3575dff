import csv

import numpy as np
import pytest

from paretomkl import experiment as ex
from paretomkl.data import build_ovo, gaussian_blobs, scale_01
from paretomkl.exceptions import InputError, ParseError
from paretomkl.kernels import build_bank
from paretomkl.scalarization import PParam
from paretomkl.trainer import SolverConfig, train

SMALL_KERNELS = "linear,poly:2,gaussian:1"


def small_config(**kw):
    base = dict(synthetic="blobs", blob_size=40, train_fraction=0.2, repeats=1,
                p_grid=["0.5", "1", "2"], kernels=SMALL_KERNELS)
    base.update(kw)
    return ex.ExperimentConfig(**base)


def test_config_validation():
    with pytest.raises(InputError):
        ex.ExperimentConfig(p_grid=[])
    with pytest.raises(InputError):
        ex.ExperimentConfig(train_fraction=1.0)
    with pytest.raises(InputError):
        ex.ExperimentConfig(repeats=0)
    with pytest.raises(InputError):
        ex.ExperimentConfig(p_grid=["-1"])
    with pytest.raises(InputError):
        ex.ExperimentConfig(kernels="sigmoid:1")


def test_config_text_round_trip(tmp_path):
    cfg = small_config(p_grid=["0.01", "0.123456789", "inf"], cv_C=[0.1, 1.0], classes=[0, 2])
    path = tmp_path / "cfg.txt"
    path.write_text("# comment\n" + cfg.to_text())
    back = ex.ExperimentConfig.from_file(path)
    assert back == cfg
    assert back.p_grid[-1] == PParam.parse("inf")
    path.write_text("repeats = 3\nnot a pair\n")
    with pytest.raises(ParseError) as exc:
        ex.ExperimentConfig.from_file(path)
    assert exc.value.line == 2
    path.write_text("unknown_key = 1\n")
    with pytest.raises(ParseError):
        ex.ExperimentConfig.from_file(path)


def test_default_grid_and_kernels():
    cfg = ex.ExperimentConfig()
    assert [str(p) for p in cfg.p_grid] == ["0.01", "0.02", "0.05", "0.1", "0.2", "0.5", "1", "2", "5",
                                           "10", "20", "50", "inf"]
    assert cfg.s == 1.1
    assert len(ex.parse_kernel_specs(cfg.kernels)) == 11
    specs = ex.parse_kernel_specs(SMALL_KERNELS)
    assert ex.parse_kernel_specs(ex.format_kernel_specs(specs)) == specs


def test_ovo_vote():
    pairs = [(0, 1), (0, 2), (1, 2)]
    # A beats B, A beats C, B beats C
    assert ex.ovo_vote([[1], [1], [1]], pairs, [0, 1, 2])[0] == 0
    # cycle: every class gets one vote, lowest id wins
    assert ex.ovo_vote([[1], [-1], [1]], pairs, [0, 1, 2])[0] == 0
    assert ex.ovo_vote([[-1], [1], [1]], pairs, [0, 1, 2])[0] == 1


def _trained(classes=3, n=40):
    ds, _ = scale_01(gaussian_blobs(n, seed=2))
    if classes == 2:
        ds = ds.subset([0, 1])
    group = build_ovo(ds, 0.2, seed=0)
    bank = build_bank(group.training_sets(), ex.parse_kernel_specs(SMALL_KERNELS))
    return group, bank, train(bank, SolverConfig(p=1))


def test_evaluate_multiclass_two_classes_matches_task():
    group, bank, model = _trained(classes=2)
    acc, overall = ex.evaluate_multiclass(model, bank, group)
    assert acc.size == 1 and overall == pytest.approx(acc[0])
    assert 0 <= overall <= 1


def test_evaluate_multiclass_perfect(monkeypatch):
    group, bank, model = _trained()

    def oracle(model, bank, t, X):
        a, b = group.tasks[t].classes
        lab = group.dataset.labels
        # look up the true class by exact feature match
        idx = [int(np.flatnonzero(np.all(group.dataset.features == x, axis=1))[0]) for x in X]
        return np.where(lab[idx] == a, 1, -1)

    monkeypatch.setattr(ex, "predict", oracle)
    acc, overall = ex.evaluate_multiclass(model, bank, group)
    assert overall == 1.0 and np.all(acc == 1.0)


def test_cross_validate_C():
    ds, _ = scale_01(gaussian_blobs(50, seed=1))
    group = build_ovo(ds, 0.2, seed=0)
    specs = ex.parse_kernel_specs(SMALL_KERNELS)
    cfg = small_config()
    assert ex.cross_validate_C(group, specs, [3.0], cfg) == 3.0
    a = ex.cross_validate_C(group, specs, [0.1, 1.0, 10.0], cfg, folds=5, seed=4)
    b = ex.cross_validate_C(group, specs, [10.0, 0.1, 1.0], cfg, folds=5, seed=4)
    assert a == b and a in (0.1, 1.0, 10.0)
    folds = [g for g in ex._fold_groups(group, 5, 0) if g is not None]
    # 30 training samples in 5 folds of 6
    assert [g.test_labels.size for g in folds] == [6] * 5


def test_sweep_shape_dcr_and_reproducibility(tmp_path):
    cfg = small_config(p_grid=["1"])
    report = ex.run_sweep(cfg)
    tables = ex.report_tables(report)
    rows = list(csv.reader(tables["accuracy_table.csv"].splitlines()))
    assert rows[0] == ["p", "repeat", "task", "accuracy", "overall"]
    assert len(rows) - 1 == report.n_tasks + 1
    assert rows[-1][2] == "overall"
    dcr = list(csv.DictReader(tables["dcr_vs_p.csv"].splitlines()))
    assert all(float(r["dcr"]) == 0.0 for r in dcr)

    cfg = small_config(repeats=2, p_grid=["0.5", "1", "inf"], cv_C=[0.5, 2.0])
    out1, out2 = tmp_path / "a", tmp_path / "b"
    ex.emit_report(ex.run_sweep(cfg), out1)
    rerun = ex.ExperimentConfig.from_file(out1 / "manifest.txt")
    rerun.workers = 2
    ex.emit_report(ex.run_sweep(rerun), out2)
    for name in ("objectives_vs_p.csv", "dcr_vs_p.csv", "accuracy_table.csv", "theta_lambda_trace.csv",
                 "cells.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name
    assert "inf" in (out1 / "objectives_vs_p.csv").read_text().split("\n")[-2].split(",")[0]


def test_sweep_records_failures(monkeypatch):
    from paretomkl.exceptions import SolverError

    real = ex.train

    def flaky(bank, config, **kw):
        if config.p.value == 2.0:
            raise SolverError("forced")
        return real(bank, config)

    monkeypatch.setattr(ex, "train", flaky)
    report = ex.run_sweep(small_config())
    failed = [c for c in report.cells if c.status != "ok"]
    assert len(failed) == 1 and "forced" in failed[0].message
    assert "failed" in ex.report_tables(report)["cells.csv"]

    monkeypatch.setattr(ex, "train", lambda *a, **k: (_ for _ in ()).throw(SolverError("always")))
    with pytest.raises(SolverError):
        ex.run_sweep(small_config())


def test_emit_report_io_error(tmp_path):
    report = ex.run_sweep(small_config(p_grid=["1"]))
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(InputError) as exc:
        ex.emit_report(report, blocker / "sub")
    assert "file" in str(exc.value)


def test_paired_t_test():
    t, pval = ex.paired_t_test([1.0, 2.0, 3.0, 4.0], [1.1, 2.2, 3.1, 4.3])
    assert t < 0 and 0 < pval < 1
