"""Exception taxonomy shared by all bridgepan modules."""


class BridgepanError(Exception):
    """Base class for all library errors."""


class DimensionError(BridgepanError, ValueError):
    """Shapes, band counts, or divisibility constraints do not line up."""


class ConfigurationError(BridgepanError, ValueError):
    """Invalid option, flag, or hyper-parameter value."""


class NumericError(BridgepanError, ArithmeticError):
    """Singular or ill-conditioned linear algebra, overflow, etc."""

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class FormatError(BridgepanError, ValueError):
    """Malformed container or checkpoint file."""

    def __init__(self, message, byte_offset=None):
        super().__init__(message)
        self.byte_offset = byte_offset


class DomainError(BridgepanError, ValueError):
    """Input outside the mathematical domain of an operation."""


class ContractViolation(BridgepanError, RuntimeError):
    """A documented precondition was violated by the caller."""
