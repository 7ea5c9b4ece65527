"""Exception hierarchy.

``NumericalError`` subclasses map to CLI exit code 3, ``ConfigError`` to 2.
"""


class TrajentError(Exception):
    pass


class ConfigError(TrajentError):
    pass


class NumericalError(TrajentError):
    pass


class DimensionMismatch(NumericalError, ValueError):
    pass


class NotHermitian(NumericalError, ValueError):
    pass


class NoConvergence(NumericalError):
    pass


class NotFaithful(NumericalError, ValueError):
    """Raised when a state has an eigenvalue below the faithfulness floor."""


class ProbeNotFaithful(NotFaithful):
    pass


class InvalidState(NumericalError, ValueError):
    pass


class StateRepairFailed(InvalidState):
    pass


class OrderOverflow(NumericalError, OverflowError):
    pass


class EfficiencyNotUnit(NumericalError, ValueError):
    pass


class BranchLimitExceeded(NumericalError, ValueError):
    pass
