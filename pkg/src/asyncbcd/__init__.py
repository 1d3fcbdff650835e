"""Simulation and verification of asynchronous block coordinate descent under bounded delays."""

from .analysis import (
    BoundReport, Contraction, TheoremConstants, WindowSeries, check_lemmas, check_theorem_bound,
    compute_constants, compute_gamma0, estimate_eta, fit_contraction, stepsize_bounds,
)
from .data import Dataset, generate_synthetic, load_sparse_text, preprocess
from .logistic import make_logistic
from .objective import (
    ObjectiveInstance, PLCertificate, RCParameters, check_pl_at, check_rc_at, diagonal_quadratic,
    gradient_check, least_squares, make_builtin, pl_sine, random_least_squares, rc_to_pl,
)
from .partition import BlockPartition, make_partition
from .schedule import AsyncSchedule, generate_schedule, iter_event_chunks, validate_schedule
from .simulator import GapCurve, SimulationTrace, Simulator, init_run, run, run_until, step

__all__ = [
    "AsyncSchedule", "BlockPartition", "BoundReport", "Contraction", "Dataset", "GapCurve",
    "ObjectiveInstance", "PLCertificate", "RCParameters", "SimulationTrace", "Simulator",
    "TheoremConstants", "WindowSeries", "check_lemmas", "check_pl_at", "check_rc_at",
    "check_theorem_bound", "compute_constants", "compute_gamma0", "diagonal_quadratic",
    "estimate_eta", "fit_contraction", "generate_schedule", "generate_synthetic", "gradient_check",
    "init_run", "iter_event_chunks", "least_squares", "load_sparse_text", "make_builtin",
    "make_logistic", "make_partition", "pl_sine", "preprocess", "random_least_squares", "rc_to_pl",
    "run", "run_until", "stepsize_bounds", "step", "validate_schedule",
]
