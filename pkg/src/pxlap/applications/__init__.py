"""Preset systems with constructed and certified sub-supersolution pairs."""

from ._shared import GateError
from .concave_convex import (ConcaveConvexParams, ConcaveConvexProblem, ThresholdReport,
                             concave_convex_setup, minimizer, psi, theta_threshold)
from .logistic import LogisticParams, logistic_setup
from .sublinear import SublinearParams, sublinear_setup

__all__ = [
    "GateError",
    "ConcaveConvexParams",
    "ConcaveConvexProblem",
    "ThresholdReport",
    "LogisticParams",
    "SublinearParams",
    "concave_convex_setup",
    "logistic_setup",
    "minimizer",
    "psi",
    "sublinear_setup",
    "theta_threshold",
]
