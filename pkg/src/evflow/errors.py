"""Exception hierarchy shared by all evflow modules."""


class EvflowError(Exception):
    """Base class for every error raised by evflow."""


class ContractError(EvflowError, ValueError):
    """An argument violates a documented precondition."""


class InvalidDimensionError(ContractError):
    pass


class InfeasibleProfileError(ContractError):
    pass


class UnsupportedAspectError(ContractError):
    pass


class NumericError(EvflowError, ArithmeticError):
    """A numerical routine failed or produced an out-of-contract value."""


class GapError(NumericError):
    """Two eigenvalues came closer than the configured gap guard."""

    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


class StabilityError(NumericError):
    pass


class StiffnessError(NumericError):
    def __init__(self, message, min_gap=None):
        super().__init__(message)
        self.min_gap = min_gap


class EnumerationCapError(EvflowError):
    """The configuration space is too large to enumerate."""


class StatisticsError(EvflowError):
    pass
