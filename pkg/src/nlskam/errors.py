"""Exception types shared across the package.

The CLI maps these onto process exit codes: validation problems exit 1,
small divisors exit 2, capacity overflows exit 3.
"""


class ValidationError(ValueError):
    """Bad arguments, mismatched parameters, or violated preconditions."""


class DimensionMismatchError(ValidationError):
    """Lattice dimension of an argument disagrees with the configured d."""


class CapacityError(RuntimeError):
    """A product or bracket would exceed the configured degree cap."""


class SmallDivisorError(RuntimeError):
    """A homological divisor fell below the guard threshold.

    Carries the offending (k, k_bar) key so the caller can report which
    combination of modes resonated.
    """

    def __init__(self, message, key=None, divisor=None):
        super().__init__(message)
        self.key = key
        self.divisor = divisor


class DivergenceRiskError(RuntimeError):
    """Lie-series term norms failed to decay under the smallness guard."""
