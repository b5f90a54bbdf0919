"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid grid, scenario or parameter configuration."""


class PreconditionError(ValueError):
    """An input violates an operation's precondition (e.g. non-solenoidal data)."""


class StepSizeError(RuntimeError):
    """Time step violates the CFL constraint of the explicit transport stages."""

    def __init__(self, message, suggested_dt):
        super().__init__(f"{message} (suggested dt <= {suggested_dt:.3e})")
        self.suggested_dt = suggested_dt


class SmallnessError(RuntimeError):
    """The smallness condition required by a weighted estimate fails on [0, T]."""


class DivergenceError(RuntimeError):
    """An iterative scheme failed to contract."""
