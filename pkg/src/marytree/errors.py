class ValidationError(ValueError):
    """Bad user input (toll spec, parameters)."""


class NotRational(ValueError):
    """Exact mode requested for a toll with irrational values."""


class NumericalError(ArithmeticError):
    """A numerical safeguard tripped (root residual, realness check)."""
