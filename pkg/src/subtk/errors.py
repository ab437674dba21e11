"""Exception hierarchy shared by the library and the CLI."""


class SubtkError(Exception):
    """Base class; ``code`` is the machine-readable tag used in CLI reports."""

    code = "error"


class DomainError(SubtkError, ValueError):
    code = "domain_error"


class InvariantViolation(SubtkError, ValueError):
    """A theorem hypothesis or type invariant does not hold."""

    code = "invariant_violation"

    def __init__(self, message, hypothesis=None):
        super().__init__(message)
        self.hypothesis = hypothesis
        if hypothesis is not None:
            self.code = "violates_" + hypothesis.strip("()").replace(".", "_").lower()


class ParseError(SubtkError, ValueError):
    code = "parse_error"


class GridError(SubtkError, ValueError):
    code = "grid_error"


class HormanderError(SubtkError):
    """The bracket span never reached full rank within the length cap."""

    code = "hormander_not_verified"

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class ConvergenceError(SubtkError):
    """An iterative method stopped before meeting its tolerance.

    ``best`` carries whatever the method had when it gave up (best iterate,
    residuals, partial eigenpairs).
    """

    code = "no_convergence"

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
