class ValidationError(ValueError):
    """Malformed model input (bad ids, unnormalized rows, malformed contexts)."""


class ZeroProbabilityEvidence(ArithmeticError):
    """An observation with zero likelihood was conditioned on."""


class GuardExceeded(RuntimeError):
    """A computation would exceed its configured size guard.

    ``estimate`` carries the size that triggered the refusal.
    """

    def __init__(self, message: str, estimate: float):
        super().__init__(message)
        self.estimate = estimate
