"""
Exception hierarchy for the modulation lab.

Library modules raise these; the orchestrator maps them to exit codes.
"""


class LabError(Exception):
    """Base class for every domain failure raised by the lab."""


class ConfigError(LabError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ChartDomainError(LabError, ValueError):
    """A chart precondition, transition map or validity window was violated."""


class DegeneratePointError(LabError, ValueError):
    """(mu, eps) = (0, 0) has the whole circle as its blown-up preimage."""


class RangeError(LabError, ValueError):
    """A truncated series was evaluated outside its validity window."""


class NoSignChangeError(LabError):
    pass


class ExpansionOrderError(LabError):
    pass


class DerivationError(LabError):
    pass


class SolverBlowUpError(LabError):
    def __init__(self, message, time=None):
        self.time = time
        super().__init__(message)


class ConstraintViolationError(LabError):
    pass


class GridMismatchError(LabError):
    pass


class DelayNotObservedError(LabError):
    pass


class AcceptanceError(LabError):
    pass
