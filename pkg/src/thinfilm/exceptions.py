"""Exception hierarchy shared by the solver modules."""


class ThinFilmError(Exception):
    """Base class for every error raised by this package."""


class DomainError(ThinFilmError, ValueError):
    """An input lies outside the set on which a formula is defined."""


class ShapeError(ThinFilmError, ValueError):
    """Array length does not match the grid it is paired with."""


class ConvergenceError(ThinFilmError, RuntimeError):
    """A scalar root solve exceeded its iteration cap."""


class NonFiniteError(ThinFilmError, FloatingPointError):
    """A coefficient or iterate became NaN or infinite."""


class SingularSystemError(ThinFilmError, ArithmeticError):
    """The banded implicit system could not be factorised."""


class StepFailure(ThinFilmError, RuntimeError):
    """No step could be completed before the step size fell below ``dt_min``."""


class _RunSignal(ThinFilmError):
    def __init__(self, message, outcome):
        super().__init__(message)
        self.outcome = outcome


class TouchdownDetected(_RunSignal):
    """Minimum film height fell to the touchdown threshold.

    The completed step is available as ``outcome``.
    """


class BlowupDetected(_RunSignal):
    """The derivative-norm monitor exceeded its cap. See ``outcome``."""


class ConfigError(ThinFilmError, ValueError):
    """Invalid run configuration.

    ``lineno`` is set for syntax problems and ``key`` for validation problems.
    """

    def __init__(self, message, *, lineno=None, key=None):
        super().__init__(message)
        self.lineno = lineno
        self.key = key
