"""Exception types raised across the package."""


class ValidationError(ValueError):
    """An input object violates its documented invariants."""


class UnsupportedAngleError(ValueError):
    """Symbolic conjugation was asked for a rotation outside the Clifford group."""


class GenerationError(RuntimeError):
    """Random spin geometry could not be realized (e.g. min separation unsatisfiable)."""


class NumericalDriftError(RuntimeError):
    """A propagated density matrix drifted beyond tolerance."""
