import numpy as np
import pytest

from paretomkl.data import tiny_tasks
from paretomkl.kernels import KernelSpec, build_bank

TINY_SPECS = [KernelSpec.linear(), KernelSpec.polynomial(2), KernelSpec.gaussian(4.0)]


def tiny_bank(n=20, n_tasks=2, seed=0, specs=TINY_SPECS):
    return build_bank(tiny_tasks(n, n_tasks, seed), specs)


def two_point_bank():
    X = np.array([[0.0], [1.0]])
    y = np.array([-1.0, 1.0])
    return build_bank([(X, y)], [KernelSpec.linear()])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance results: criterion number -> (passed, detail); printed after the run
ACCEPTANCE: dict[int, tuple[bool, str]] = {}
# objective traces of every coordinate-descent run made by the acceptance suite
DESCENT_TRACES: list[tuple[str, list[float]]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
