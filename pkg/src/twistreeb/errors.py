"""Exception hierarchy shared by all modules."""


class TwistReebError(Exception):
    """Base class for every error raised by the package."""


class InputError(TwistReebError, ValueError):
    """Malformed input, typically a dimension mismatch."""


class ParameterError(TwistReebError, ValueError):
    """System parameters outside the validated range."""


class UnsupportedStructureError(TwistReebError):
    """Operation requested on a structure or system kind that does not support it."""


class IntegrationError(TwistReebError):
    """Time integration failed; ``partial`` holds whatever was computed."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class NotFoundError(TwistReebError):
    """A search (section crossing, orbit, candidate) came back empty."""


class RankDeficiencyError(TwistReebError):
    """Singular Newton system; ``kernel_dim`` is the numerical kernel dimension."""

    def __init__(self, message, kernel_dim):
        super().__init__(message)
        self.kernel_dim = kernel_dim


class ConvergenceError(TwistReebError):
    """Iteration did not converge; ``report`` carries the diagnostic."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report or {}


class ContractibilityError(TwistReebError):
    """Loop with nonzero torus winding where a filling disc is required."""


class InvalidStabilizationError(TwistReebError):
    """The stabilizing form is not positive on the Hamiltonian vector field."""


class ConditioningError(TwistReebError):
    """Ill-conditioned basis; ``condition`` is the offending condition number."""

    def __init__(self, message, condition):
        super().__init__(message)
        self.condition = condition


class ConfigError(TwistReebError):
    """Experiment configuration failed schema validation."""


class FormatError(InputError):
    """A result file does not contain the payload kind requested."""
