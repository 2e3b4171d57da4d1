"""Exceptions and input checks shared across the package."""

from __future__ import annotations

import numpy as np


class DomainError(ValueError):
    """An argument lies outside the domain of the requested operation."""


class DegenerateModelError(ValueError):
    """The output has zero variance, so variance ratios are undefined."""


class SizeError(ValueError):
    """A subset enumeration would exceed the supported input dimension."""


class EvaluationError(RuntimeError):
    """A model or quadrature produced a non-finite or unusable value."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class NumericalInstabilityError(EvaluationError):
    """A probability computed by quadrature fell outside [0, 1]."""


def check_probability(u, *, name="u"):
    u = np.asarray(u, dtype=float)
    if np.any(~((u > 0.0) & (u < 1.0))):
        raise DomainError(f"{name} must lie in the open interval (0, 1)")
    return u


def check_inputs(inputs):
    """Return ``inputs`` as a tuple of distributions, rejecting empty vectors."""
    from .distributions import Distribution

    inputs = tuple(inputs)
    if not inputs:
        raise ValueError("at least one input distribution is required")
    for i, d in enumerate(inputs):
        if not isinstance(d, Distribution):
            raise TypeError(f"input {i} is not a Distribution: {d!r}")
    return inputs


def check_finite_outputs(y, X=None):
    y = np.asarray(y, dtype=float)
    bad = ~np.isfinite(y)
    if np.any(bad):
        idx = int(np.flatnonzero(bad)[0])
        row = None if X is None else np.asarray(X)[idx]
        raise EvaluationError(f"model returned a non-finite value at row {idx}: inputs={row}", row=row)
    return y
