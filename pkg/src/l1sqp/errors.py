"""Exception hierarchy shared by the solver modules."""


class L1SqpError(Exception):
    """Base class for every error raised by this package."""


class EvaluationError(L1SqpError):
    """A problem callback produced a non-finite value."""

    def __init__(self, function, x):
        self.function = function
        self.x = x
        super().__init__(f"non-finite output from {function} at x={list(map(float, x))}")


class CapabilityError(L1SqpError):
    """The problem lacks derivatives that the requested mode needs."""


class ProblemParseError(L1SqpError):
    """A JSON problem document could not be turned into a problem."""

    def __init__(self, message, location="$"):
        self.location = location
        super().__init__(f"{location}: {message}")


class QpMatrixError(L1SqpError):
    """The QP Hessian block is not positive definite."""


class QpCyclingError(L1SqpError):
    """The active-set loop hit its iteration limit.

    ``best`` carries the lowest-model-value iterate seen so far.
    """

    def __init__(self, message, best=None):
        self.best = best
        super().__init__(message)


class LineSearchFailure(L1SqpError):
    """Backtracking exhausted its budget without satisfying the Armijo test."""


class UnknownProblemError(L1SqpError, KeyError):
    def __init__(self, name, valid):
        self.name = name
        self.valid = list(valid)
        super().__init__(f"unknown problem {name!r}; valid names: {', '.join(self.valid)}")

    def __str__(self):
        return self.args[0]
