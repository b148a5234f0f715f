"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


class ShapeCapError(ValidationError):
    """Raised when a tensor shape would exceed the configured element cap."""


class FormatError(ValidationError):
    """Raised when a PMT1/PME1 file or JSON config is malformed."""


class NumericalError(ArithmeticError):
    """Raised when a computation produces non-finite values it cannot recover from."""
