"""Projection pursuit testing of general null hypotheses in sparse regression."""

from .exceptions import ContractError, InputError, PPTestError, SolverError
from .models import LINEAR, LOGISTIC, ModelAdapter
from .pptest import Dataset, TestConfig, TestResult, run_pptest
from .precision import ClimeConfig
from .projection import BetaMin, Custom, L0Ball, QuadraticBall, project

__version__ = "0.1.0"

__all__ = [
    "BetaMin",
    "ClimeConfig",
    "ContractError",
    "Custom",
    "Dataset",
    "InputError",
    "L0Ball",
    "LINEAR",
    "LOGISTIC",
    "ModelAdapter",
    "PPTestError",
    "QuadraticBall",
    "SolverError",
    "TestConfig",
    "TestResult",
    "project",
    "run_pptest",
]
