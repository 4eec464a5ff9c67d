"""Exception hierarchy; the CLI maps these onto exit codes."""


class ScatterLabError(Exception):
    """Base class for all library errors."""


class ConfigError(ScatterLabError):
    """Malformed configuration or input file (exit code 1)."""


class AdmissibilityError(ScatterLabError, ValueError):
    """Parameters outside the admissible set (e.g. p^2 > 4(E + rho^2))."""


class SupportError(ScatterLabError, ValueError):
    """A phantom or source point violates a support constraint."""


class SolverError(ScatterLabError):
    """Iterative solver failed to converge (exit code 2).

    `history` holds the residual norms seen before giving up.
    """

    def __init__(self, message: str, history=None):
        super().__init__(message)
        self.history = list(history or [])


class VerificationError(ScatterLabError):
    """A verification check failed (exit code 3)."""
