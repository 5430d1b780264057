"""Exception types shared across the package."""


class ValidationError(ValueError):
    """A configuration or input violates a documented contract (CLI exit code 2)."""


class DiscretizationMismatchError(ValidationError):
    """Input data does not lie on the discretization the model was trained on."""


class DivergenceError(RuntimeError):
    """A simulation or training run left the finite/bounded regime (CLI exit code 3).

    Carries the step index at which the blow-up was detected, when known.
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class InversionError(RuntimeError):
    """Latent least-squares projection failed; carries solver diagnostics."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
