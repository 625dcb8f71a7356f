"""Shared exception types."""


class ValidationError(ValueError):
    """Bad input: config keys, shapes, parameter ranges."""


class PositivityError(RuntimeError):
    """A quadratic form or operator lost positivity (shift t too small
    or the perturbation too strong)."""


class NumericalError(RuntimeError):
    """A numerical procedure failed to produce a usable result
    (too few values above the noise floor, fit impossible, non-finite data)."""
