"""Exception hierarchy shared by the solver modules."""


class OpimError(Exception):
    """Base class for all errors raised by this package."""


class ExprError(OpimError):
    pass


class ExprSyntaxError(ExprError, ValueError):
    """Malformed expression text; ``position`` is a 1-based column."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class UnknownIdentifierError(ExprSyntaxError):
    pass


class UnboundSymbolError(ExprError, KeyError):
    def __str__(self):
        return str(self.args[0])


class DomainError(ExprError, ArithmeticError):
    """Evaluation left the real domain (division by zero, ln of x <= 0)."""


class SeriesError(OpimError, ValueError):
    """Incompatible series operands or degree overflow."""


class ProblemError(OpimError, ValueError):
    """Invalid problem definition or problem file."""


class UnsupportedProblemError(OpimError):
    """The correction equation would not be linear with constant coefficients."""


class ResonanceError(OpimError):
    """Singular condition system for the correction equation."""


class NoConvergenceError(OpimError):
    """Every start of a nonlinear solve failed."""

    def __init__(self, message: str, starts_tried: int = 0, best_residual: float = float("inf")):
        super().__init__(message)
        self.starts_tried = starts_tried
        self.best_residual = best_residual


class NoRealRootError(OpimError):
    """The transcendental equation for theta has no real root."""


class IntegrationOverflowError(OpimError):
    """Reference integration blew up; ``last_x`` is the last finite abscissa."""

    def __init__(self, message: str, last_x: float):
        super().__init__(message)
        self.last_x = last_x
