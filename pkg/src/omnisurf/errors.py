"""Exceptions shared across modules."""


class InfeasibleError(RuntimeError):
    """The requested instance cannot be solved as posed (too large, or a
    required selection cannot be made)."""
