"""Moments, transfer theorems and limit laws for additive functionals on random m-ary search trees."""

__version__ = "0.1.0"

from .errors import NotRational, NumericalError, ValidationError
from .model import build_tree, eval_functional, make_toll, monte_carlo_moments, parse_toll, shape_prob
from .moments import centered_moments, exact_mean, exact_variance, solve_basic_recurrence
from .indicial import alpha, find_roots, m0
from .transfer import ett_solution, periodicity_probe
from .limitlaw import g_moments, sample_Y, summary_normalization

__all__ = [
    "NotRational", "NumericalError", "ValidationError",
    "build_tree", "eval_functional", "make_toll", "monte_carlo_moments", "parse_toll", "shape_prob",
    "centered_moments", "exact_mean", "exact_variance", "solve_basic_recurrence",
    "alpha", "find_roots", "m0", "ett_solution", "periodicity_probe",
    "g_moments", "sample_Y", "summary_normalization",
]
