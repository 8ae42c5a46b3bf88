"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Raised when inputs, parameters or configuration violate a contract."""


class NumericalError(RuntimeError):
    """Raised when a computation produces a non-finite or unusable result."""
