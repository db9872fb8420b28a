"""Exception types raised across the package."""


class PbeLabError(Exception):
    """Base class for every error raised by pbelab."""


class ValidationError(PbeLabError, ValueError):
    """An input object violates its documented invariants."""


class DimensionMismatch(ValidationError):
    pass


class DomainError(ValidationError):
    pass


class NumericalError(PbeLabError, ArithmeticError):
    """A numerical routine could not produce a trustworthy answer."""


class NonConvergent(NumericalError):
    pass


class NonUnique(NumericalError):
    pass


class SingularSystem(NumericalError):
    pass


class ZeroMass(ValidationError):
    """A projection row integrates to zero and cannot be normalized."""


class ZeroDirection(ValidationError):
    pass


class NotNullVector(ValidationError):
    pass


class RangeViolation(ValidationError):
    pass


class UnsupportedLambda(ValidationError):
    pass


class InvalidSplit(ValidationError):
    pass


class SingularRepresentativeBlock(NumericalError):
    pass


class SchemaError(ValidationError):
    """A document declares an unknown schema version or lacks required fields."""


class IoError(PbeLabError, OSError):
    """A model, table or report file could not be read or written."""
