"""Exception hierarchy shared by all modules."""


class QBranchError(Exception):
    """Base class for errors raised by qbranch."""


class DomainError(QBranchError, ValueError):
    """An argument lies outside the domain of an operation."""


class DegenerateInputError(QBranchError, ValueError):
    """Inputs produce a degenerate object (e.g. a zero state vector)."""


class CapExceededError(QBranchError):
    """A computation would exceed its configured size cap."""

    def __init__(self, message, size=None, cap=None):
        super().__init__(message)
        self.size = size
        self.cap = cap


class ConvergenceError(QBranchError):
    """An iterative search failed; ``best`` holds the best-so-far result."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class InconsistencyError(QBranchError):
    """Two independently computed quantities contradict each other."""


class AuditToleranceError(InconsistencyError):
    """A numerical audit could not be resolved at the requested tolerance."""
