"""Exception types shared across the package."""


class InputError(ValueError):
    """Malformed or inconsistent user input (files, shapes, parameters)."""


class NumericalError(RuntimeError):
    """A solver failed to reach its tolerance."""


class InvariantViolation(RuntimeError):
    """An internal invariant (positivity, conservation) was broken."""
