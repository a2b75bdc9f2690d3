"""Exception hierarchy shared by every module of the toolkit."""


class MirrorDescentError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(MirrorDescentError, ValueError):
    """Invalid scalar, unsupported geometry/set pair, or bad YAML/CLI value."""


class DomainError(MirrorDescentError, ValueError):
    """Point outside the domain of an operation (dimension, finiteness, grad_d)."""


class InnerSolverError(MirrorDescentError):
    """The numeric prox-subproblem solver did not converge."""

    def __init__(self, message, residual=float('nan'), iterations=0):
        super().__init__(f"{message} (residual={residual:.3e}, iterations={iterations})")
        self.residual = residual
        self.iterations = iterations


class LedgerError(MirrorDescentError):
    """Solver failure that still carries the step ledger collected so far."""

    def __init__(self, message, ledger=None):
        super().__init__(message)
        self.ledger = ledger


class NoProductiveStepsError(LedgerError):
    """Stopping rule met with |I| = 0, so the averaged output is undefined."""


class BudgetExceededError(LedgerError):
    """Iteration cap hit, or the stopping rule can never be satisfied."""


class InfeasibleProblemError(MirrorDescentError):
    """No point of Q satisfies g(x) <= 0."""


class InvariantViolationError(MirrorDescentError):
    """A runtime invariant check failed (debug mode)."""


class ReportError(MirrorDescentError):
    """A report or trace could not be written."""
