"""Least-squares policy iteration for LQR, with and without partial model knowledge."""

from plspi.exceptions import (
    ConditioningError,
    ConfigError,
    DataError,
    DimensionError,
    DivergenceError,
    DomainError,
    ExcitationError,
    ExplosionError,
    ImprovementError,
    InstabilityError,
    NumericalError,
    PLSPIError,
    PriorError,
)
from plspi.lqr import CostSpec, assemble_h, optimal_gain, policy_cost, solve_dare, solve_policy_lyapunov, spectral_radius
from plspi.env import Dataset, LinearSystem, NoiseSpec, collect, step
from plspi.lspi import EvalMethod, LspiConfig, evaluate_policy, lspi_run, policy_improve
from plspi.partial import PartialModel, evaluate_policy_partial, plspi_run

__version__ = "0.1.0"
SCHEMA_VERSION = "1"

__all__ = [
    "ConditioningError",
    "DomainError",
    "NumericalError",
    "ConfigError",
    "CostSpec",
    "DataError",
    "Dataset",
    "DimensionError",
    "DivergenceError",
    "EvalMethod",
    "ExcitationError",
    "ExplosionError",
    "ImprovementError",
    "InstabilityError",
    "LinearSystem",
    "LspiConfig",
    "NoiseSpec",
    "PLSPIError",
    "PartialModel",
    "PriorError",
    "assemble_h",
    "collect",
    "evaluate_policy",
    "evaluate_policy_partial",
    "lspi_run",
    "optimal_gain",
    "plspi_run",
    "policy_cost",
    "policy_improve",
    "solve_dare",
    "solve_policy_lyapunov",
    "spectral_radius",
    "step",
]
