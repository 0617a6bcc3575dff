"""Multi-task multiple kernel learning with a p-norm scalarization of task objectives."""

from .exceptions import ContractError, InputError, ParetoMKLError, ParseError, SolverError
from .experiment import ExperimentConfig, SweepReport, emit_report, run_sweep
from .kernels import KernelBank, KernelSpec, build_bank, default_bank_specs
from .model_io import load_model, save_model
from .scalarization import PParam, is_dominated, mutually_nondominated, nu_p
from .trainer import ModelState, SolverConfig, predict, train, train_convex, train_nonconvex, train_p1

__version__ = "0.1.0"

__all__ = [
    "ContractError", "ExperimentConfig", "InputError", "KernelBank", "KernelSpec", "ModelState",
    "PParam", "ParetoMKLError", "ParseError", "SolverConfig", "SolverError", "SweepReport",
    "build_bank", "default_bank_specs", "emit_report", "is_dominated", "load_model",
    "mutually_nondominated", "nu_p", "predict", "run_sweep", "save_model", "train",
    "train_convex", "train_nonconvex", "train_p1",
]
