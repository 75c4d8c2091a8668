"""Exception types shared across the package."""


class InvalidArgument(ValueError):
    """An input violates a documented precondition."""


class NumericalError(ArithmeticError):
    """A computation left its numerical domain (nonpositive variance, singular fit)."""
