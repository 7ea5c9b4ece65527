"""Entropy production along continuously monitored quantum trajectories.

Submodules
----------
opalg
    Hermitian eigensolver, matrix functions, nested commutators.
lindblad
    Open-system model, Lindblad generator and its dual.
entropy
    Von Neumann and relative entropy, mutual information.
paycha
    Noncommutative Taylor terms and the entropy production series.
trajectory
    Stochastic master equation, entropy-rate terms, ensembles.
discrete
    Repeated-interaction qubit-probe model and Holevo accounting.
cli
    Scenario runner and verification suites.
"""

__version__ = "0.1.0"

from .errors import (BranchLimitExceeded, ConfigError, DimensionMismatch, EfficiencyNotUnit,
                     InvalidState, NoConvergence, NotFaithful, NotHermitian, NumericalError,
                     OrderOverflow, ProbeNotFaithful, StateRepairFailed, TrajentError)
from .lindblad import OpenSystemModel
from .paycha import SigmaVariant

__all__ = [
    "BranchLimitExceeded", "ConfigError", "DimensionMismatch", "EfficiencyNotUnit",
    "InvalidState", "NoConvergence", "NotFaithful", "NotHermitian", "NumericalError",
    "OrderOverflow", "OpenSystemModel", "ProbeNotFaithful", "SigmaVariant", "StateRepairFailed",
    "TrajentError", "__version__",
]
