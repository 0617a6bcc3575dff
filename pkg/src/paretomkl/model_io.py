"""Versioned, line-oriented text format for trained models.

Reals are written with 17 significant digits, so a save/load round trip
reproduces every stored float exactly. Layout::

    paretomkl-model 1
    p <p>
    s <s>
    C <C>
    kernels <M>
    kernel <kind> <param>          (M lines)
    theta <M values>
    lambda <T values>
    objective <T values>
    pairs <2T class ids>           (optional, one-vs-one models only)
    scale_low <d values>           (optional input scaling, with scale_span)
    scale_span <d values>
    tasks <T>
    task <index> <N> <d> <bias>    (then, per task:)
    alpha <N values>
    label <N values>
    x <d values>                   (N lines)
    end
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .data import Scaling
from .exceptions import ParseError
from .kernels import KernelBank, KernelSpec, build_bank
from .scalarization import PParam, nu_p
from .svm_dual import TaskDual
from .trainer import ModelState

MAGIC = "paretomkl-model"
VERSION = 1


def _fmt(values) -> str:
    return " ".join("%.17g" % v for v in np.ravel(values))


def save_model(model: ModelState, bank: KernelBank, path, pairs=None, scaling=None) -> None:
    """Write ``model`` together with the kernel specs and training samples it needs.

    ``pairs`` lists the ``(positive, negative)`` class ids of one-vs-one tasks;
    ``scaling`` is the :class:`~paretomkl.data.Scaling` applied to raw inputs.
    """
    lines = [f"{MAGIC} {VERSION}", f"p {model.p}", f"s {model.s:.17g}", f"C {model.C:.17g}",
             f"kernels {bank.n_kernels}"]
    lines += [f"kernel {spec.kind} {spec.param:.17g}" for spec in bank.specs]
    lines += [f"theta {_fmt(model.theta)}", f"lambda {_fmt(model.lam)}",
              f"objective {_fmt(model.objective_vector)}"]
    if pairs is not None:
        lines.append("pairs " + " ".join(f"{int(a)} {int(b)}" for a, b in pairs))
    if scaling is not None:
        lines += [f"scale_low {_fmt(scaling.low)}", f"scale_span {_fmt(scaling.span)}"]
    lines.append(f"tasks {model.n_tasks}")
    for t, dual in enumerate(model.duals):
        X = bank.samples[t]
        lines.append(f"task {t} {X.shape[0]} {X.shape[1]} {dual.bias:.17g}")
        lines.append(f"alpha {_fmt(dual.alpha)}")
        lines.append(f"label {_fmt(bank.labels[t])}")
        lines += [f"x {_fmt(row)}" for row in X]
    lines.append("end")
    Path(path).write_text("\n".join(lines) + "\n")


class _Reader:
    def __init__(self, path):
        self.path = Path(path)
        self.lines = self.path.read_text().splitlines()
        self.pos = 0

    def peek(self) -> str:
        while self.pos < len(self.lines) and not self.lines[self.pos].strip():
            self.pos += 1
        return self.lines[self.pos].split()[0] if self.pos < len(self.lines) else ""

    def take(self, key: str, count=None) -> list[str]:
        while self.pos < len(self.lines) and not self.lines[self.pos].strip():
            self.pos += 1
        if self.pos >= len(self.lines):
            raise ParseError(f"unexpected end of file, expected {key!r}", line=self.pos, path=self.path)
        parts = self.lines[self.pos].split()
        self.pos += 1
        if parts[0] != key:
            raise ParseError(f"expected {key!r}, found {parts[0]!r}", line=self.pos, path=self.path)
        if count is not None and len(parts) - 1 != count:
            raise ParseError(f"{key!r} needs {count} values, found {len(parts) - 1}",
                             line=self.pos, path=self.path)
        return parts[1:]

    def floats(self, key: str, count=None) -> np.ndarray:
        parts = self.take(key, count)
        try:
            return np.array([float(v) for v in parts])
        except ValueError:
            raise ParseError(f"non-numeric value in {key!r}", line=self.pos, path=self.path) from None


def load_model(path, extras: bool = False):
    """Read a model file; returns the model and the rebuilt training kernel bank.

    With ``extras`` two more items follow: the class pairs and the input
    scaling, each None when absent.
    """
    r = _Reader(path)
    head = r.take(MAGIC, 1)
    if int(head[0]) != VERSION:
        raise ParseError(f"unsupported model version {head[0]}", line=1, path=r.path)
    p = PParam.parse(r.take("p", 1)[0])
    s = float(r.take("s", 1)[0])
    C = float(r.take("C", 1)[0])
    M = int(r.take("kernels", 1)[0])
    specs = []
    for _ in range(M):
        kind, param = r.take("kernel", 2)
        specs.append(KernelSpec(kind, float(param)))
    theta = r.floats("theta", M)
    lam = r.floats("lambda")
    g = r.floats("objective")
    pairs = None
    if r.peek() == "pairs":
        ids = r.floats("pairs", 2 * lam.size).astype(np.int64)
        pairs = [(int(a), int(b)) for a, b in ids.reshape(-1, 2)]
    scaling = None
    if r.peek() == "scale_low":
        low = r.floats("scale_low")
        scaling = Scaling(low=low, span=r.floats("scale_span", low.size))
    T = int(r.take("tasks", 1)[0])
    if lam.size != T or g.size != T:
        raise ParseError("task count mismatch", line=r.pos, path=r.path)
    tasks, alphas, biases = [], [], []
    for t in range(T):
        idx, n, d, bias = r.take("task", 4)
        n, d = int(n), int(d)
        alpha = r.floats("alpha", n)
        y = r.floats("label", n)
        X = np.array([r.floats("x", d) for _ in range(n)]).reshape(n, d)
        tasks.append((X, y))
        alphas.append(alpha)
        biases.append(float(bias))
    r.take("end", 0)
    bank = build_bank(tasks, specs)
    # keep the stored Gram inputs bit-identical to the saved samples
    duals = []
    for t in range(T):
        y = bank.labels[t]
        ay = alphas[t] * y
        G = np.einsum("mij,i,j->m", bank.grams[t], ay, ay)
        f = bank.combined(t, theta) @ ay
        slack = np.maximum(0.0, 1.0 - y * (f + biases[t]))
        dual = TaskDual(alpha=alphas[t], bias=biases[t], objective=float(g[t]), gram_stats=G,
                        slack_total=float(slack.sum()))
        duals.append(dual)
    model = ModelState(theta=theta, lam=lam, duals=duals, p=p, s=s, C=C, objective_vector=g,
                       scalar_objective=nu_p(g, p) if np.all(g >= 0) else float("nan"))
    return (model, bank, pairs, scaling) if extras else (model, bank)
