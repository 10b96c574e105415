"""Differentially private zeroth-order optimization assisted by public data."""

from .core import NumericError, ParamVector, Problem, RngStream, gaussian_standard
from .privacy import PrivacySpec, accountant_epsilon, calibrate_sigma
from .optimizers import ALGORITHMS, make_config, run_training
from .problems import SplitSpec, make_logistic_split, make_quadratic

__version__ = "0.1.0"
__all__ = [
    "ALGORITHMS", "NumericError", "ParamVector", "PrivacySpec", "Problem", "RngStream", "SplitSpec",
    "accountant_epsilon", "calibrate_sigma", "gaussian_standard", "make_config", "make_logistic_split",
    "make_quadratic", "run_training",
]
