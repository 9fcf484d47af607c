"""Exception hierarchy shared by all modules."""


class NtsError(Exception):
    """Base class for every error raised by this package."""


class DomainError(NtsError, ValueError):
    """Argument outside the domain where a formula or branch is valid."""


class ConvergenceError(NtsError, ArithmeticError):
    """A quadrature or iterative procedure failed to reach its tolerance."""


class BracketError(ConvergenceError):
    """Root bracketing failed within the allowed search range."""


class DegenerateError(NtsError, ValueError):
    """Input is degenerate (zero variance, zero density, zero-risk portfolio)."""


class InvalidModelError(NtsError, ValueError):
    """Market model parameters are inconsistent."""


class InfeasibleError(NtsError, ValueError):
    """An optimization problem has an empty feasible set."""


class SolverError(NtsError, RuntimeError):
    """An optimizer failed for reasons other than infeasibility."""


class InputError(NtsError, ValueError):
    """Malformed user input (CSV, JSON, config)."""
