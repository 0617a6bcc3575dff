"""Exception hierarchy shared by the solvers, loaders and CLI."""


class ParetoMKLError(Exception):
    """Base class for all package errors."""


class InputError(ParetoMKLError, ValueError):
    """Invalid arguments or data (dimension mismatch, single-class task, ...)."""


class ParseError(InputError):
    """Malformed dataset file. ``line`` is 1-based when known."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class SolverError(ParetoMKLError, RuntimeError):
    """An iterative solver failed to converge.

    ``best`` carries the best iterate found so far and ``residual`` the
    corresponding convergence measure, so callers can still inspect it.
    """

    def __init__(self, message, best=None, residual=None):
        super().__init__(message)
        self.best = best
        self.residual = residual


class ContractError(ParetoMKLError, AssertionError):
    """An internal post-condition was violated (e.g. a descent method ascended)."""
