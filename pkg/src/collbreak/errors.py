"""Exception hierarchy shared by the solver modules and the CLI."""


class CollBreakError(Exception):
    """Base class for all package errors."""


class MeshError(CollBreakError, ValueError):
    """Invalid mesh construction arguments."""


class ProjectionError(CollBreakError, ValueError):
    """A function could not be projected onto a mesh."""

    def __init__(self, message, cell=None):
        super().__init__(message)
        self.cell = cell


class EvaluationError(CollBreakError, ValueError):
    """A kernel or breakage distribution produced a non-finite value."""


class StabilityError(CollBreakError, ArithmeticError):
    """The stability constant cannot be evaluated (exponential overflow)."""


class StabilityViolation(CollBreakError, ArithmeticError):
    """A time step produced negative densities.

    ``cell`` is the first offending cell index, ``suggested_dt`` the largest
    step that would have kept every cell non-negative.
    """

    def __init__(self, message, cell=None, suggested_dt=None, step=None, time=None):
        super().__init__(message)
        self.cell = cell
        self.suggested_dt = suggested_dt
        self.step = step
        self.time = time


class InvariantViolation(CollBreakError, ArithmeticError):
    """A runtime invariant (e.g. the discrete L1 bound) failed."""


class ConfigError(CollBreakError, ValueError):
    """Invalid experiment or study configuration."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
