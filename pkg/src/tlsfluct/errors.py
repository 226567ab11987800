"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """An argument violates a documented precondition."""


class ConfigError(ValueError):
    """A run configuration failed schema or semantic validation."""


class FitError(RuntimeError):
    """A least-squares fit did not converge.

    Parameters
    ----------
    message : str
        Human readable reason.
    diagnostics : dict, optional
        Solver state at termination (iterations, cost, last parameters, ...).
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})

    def __str__(self):
        base = super().__str__()
        if not self.diagnostics:
            return base
        extra = ", ".join(f"{k}={v!r}" for k, v in self.diagnostics.items())
        return f"{base} ({extra})"


class IllConditionedFitError(FitError):
    """The data do not constrain every fit parameter."""
