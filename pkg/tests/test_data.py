import numpy as np
import pytest

from paretomkl import data as dm
from paretomkl.exceptions import InputError, ParseError


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_load_dense(tmp_path):
    ds = dm.load_dense(write(tmp_path, "a.csv", "1,2,0\n3,4,1\n5,6,1\n"))
    assert ds.features.shape == (3, 2)
    np.testing.assert_array_equal(ds.labels, [0, 1, 1])
    ds = dm.load_dense(write(tmp_path, "b.csv", "x,y,label\n1,2,0\n3,4,1\n"), header=True)
    assert ds.n_samples == 2
    ds = dm.load_dense(write(tmp_path, "c.csv", "0,1,2\n1,3,4\n"), label_col=0)
    np.testing.assert_array_equal(ds.features, [[1, 2], [3, 4]])


def test_load_dense_errors(tmp_path):
    with pytest.raises(ParseError) as exc:
        dm.load_dense(write(tmp_path, "a.csv", "1,2,abc\n"), label_col=0)
    assert exc.value.line == 1
    with pytest.raises(ParseError) as exc:
        dm.load_dense(write(tmp_path, "b.csv", "1,2,0\n1,0\n"))
    assert exc.value.line == 2
    with pytest.raises(ParseError):
        dm.load_dense(write(tmp_path, "c.csv", "1,2,0.5\n"))
    with pytest.raises(InputError):
        dm.load_dense(tmp_path / "missing.csv")


def test_load_sparse(tmp_path):
    ds = dm.load_sparse(write(tmp_path, "a.svm", "+1 1:0.5 3:2\n-1\n"))
    np.testing.assert_array_equal(ds.features, [[0.5, 0, 2], [0, 0, 0]])
    np.testing.assert_array_equal(ds.labels, [1, -1])
    with pytest.raises(ParseError) as exc:
        dm.load_sparse(write(tmp_path, "b.svm", "1 1:1\n1 2:1 2:3\n"))
    assert exc.value.line == 2
    with pytest.raises(ParseError):
        dm.load_sparse(write(tmp_path, "c.svm", "1 3:1 1:2\n"))


def test_scaling():
    ds = dm.Dataset(np.array([[2.0, 5.0], [4.0, 5.0], [6.0, 5.0]]), np.array([0, 1, 1]))
    scaled, rec = dm.scale_01(ds)
    np.testing.assert_allclose(scaled.features[:, 0], [0, 0.5, 1])
    np.testing.assert_array_equal(scaled.features[:, 1], [0, 0, 0])
    assert rec.apply([[8.0, 5.0]])[0, 0] == pytest.approx(1.5)


def _blobs(c=3, n=30, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(c * n, 2)) + np.repeat(np.arange(c), n)[:, None] * 3
    return dm.Dataset(X, np.repeat(np.arange(c), n))


def test_build_ovo_counts_and_labels():
    g = dm.build_ovo(_blobs(3), 0.2, seed=1)
    assert g.n_tasks == 3
    assert dm.build_ovo(_blobs(4), 0.2, seed=1).n_tasks == 6
    for task in g.tasks:
        a, b = task.classes
        assert a < b
        np.testing.assert_array_equal(task.labels == 1, g.dataset.labels[task.sample_ids] == a)
        assert np.intersect1d(task.train, task.test).size == 0
        assert np.unique(task.y_train).size == 2
        # each class in the pair contributes floor(0.2 * 30) = 6 training samples
        assert np.sum(task.y_train > 0) == 6 and np.sum(task.y_train < 0) == 6
    assert g.test_labels.size == 90 - 18


def test_build_ovo_determinism_and_errors():
    a = dm.build_ovo(_blobs(), 0.1, seed=7)
    b = dm.build_ovo(_blobs(), 0.1, seed=7)
    np.testing.assert_array_equal(a.train_index, b.train_index)
    c = dm.build_ovo(_blobs(), 0.1, seed=8)
    assert not np.array_equal(a.train_index, c.train_index)
    with pytest.raises(InputError):
        dm.build_ovo(_blobs(), 1.5)
    tiny = dm.Dataset(np.array([[0.0], [1.0], [2.0]]), np.array([0, 0, 1]))
    with pytest.raises(InputError):
        dm.build_ovo(tiny, 0.5)


def test_class_whitelist():
    g = dm.build_ovo(_blobs(4), 0.2, seed=0, classes=[0, 2, 3])
    assert g.n_tasks == 3
    assert set(np.unique(g.test_labels)) <= {0, 2, 3}


def test_build_multitask(tmp_path):
    paths = []
    rng = np.random.default_rng(0)
    for k in range(8):
        X = rng.normal(size=(30, 3))
        y = np.repeat([0, 1], 15)
        path = tmp_path / f"t{k}.csv"
        np.savetxt(path, np.column_stack([X, y]), delimiter=",")
        paths.append(path)
    g = dm.build_multitask(paths, 0.5, seed=3)
    assert g.n_tasks == 8
    for task in g.tasks:
        assert task.train.size == 15
        assert abs(np.sum(task.y_train > 0) - 7.5) <= 1
    bad = tmp_path / "bad.csv"
    np.savetxt(bad, np.column_stack([rng.normal(size=(4, 2)), np.zeros(4)]), delimiter=",")
    with pytest.raises(InputError):
        dm.build_multitask([bad], 0.5)


def test_stratified_split_counts():
    y = np.array([1.0] * 11 + [-1.0] * 9)
    train, test = dm.stratified_split(y, 0.5, np.random.default_rng(0))
    assert train.size == 10
    assert abs(np.sum(y[train] > 0) - 5.5) <= 1 and abs(np.sum(y[train] < 0) - 4.5) <= 1
    assert np.union1d(train, test).size == 20


def test_synthetic_generators():
    ds = dm.gaussian_blobs(50, seed=1)
    assert ds.n_samples == 150 and ds.classes.tolist() == [0, 1, 2]
    tasks = dm.tiny_tasks(20, 3, seed=2)
    assert len(tasks) == 3
    for X, y in tasks:
        assert X.shape == (20, 2) and np.unique(y).size == 2
