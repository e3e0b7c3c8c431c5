"""Error types shared across the package.

Plain ``ValueError`` is used for malformed arguments; the classes here cover
failure modes that callers may want to catch separately (resource guards,
degenerate inputs, numerically hopeless metrics).
"""

from __future__ import annotations


class ResourceLimitError(RuntimeError):
    """Raised when a requested grid would exceed the configured memory guard."""


class DegenerateInputError(ValueError):
    """Raised when an input is structurally unusable (zero orbital, empty basis)."""


class ConditioningError(RuntimeError):
    """Raised when the basis overlap metric is singular beyond regularization.

    ``discarded`` carries the dimension of the subspace dropped by canonical
    orthogonalization before the failure was declared.
    """

    def __init__(self, message: str, discarded: int = 0) -> None:
        super().__init__(message)
        self.discarded = discarded
