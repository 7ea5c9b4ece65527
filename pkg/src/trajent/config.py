"""Numerical tolerances shared by every module."""

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    """Central tolerance record.

    Every public routine that needs a threshold takes it as a keyword
    argument whose default is read from :data:`DEFAULT`.
    """

    hermitian: float = 1e-10
    faithful_floor: float = 1e-10
    repair_tol: float = 1e-6
    zero_eigenvalue: float = 1e-14
    conv_tol: float = 1e-10
    prob_floor: float = 1e-14
    k_max: int = 40
    max_sweeps: int = 50
    max_branch_depth: int = 16


DEFAULT = Tolerances()
