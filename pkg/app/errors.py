"""Exception hierarchy shared by every command.

Each error carries the process exit code the command line front end should
return and a ``details`` dict that is serialized into the error report.
"""


class GmaError(Exception):
    """Base class for all failures raised by the laboratory."""

    exit_code = 1

    def __init__(self, message, **details):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self):
        return {
            "error": type(self).__name__,
            "message": self.message,
            "details": self.details,
        }


class ValidationError(GmaError):
    """Config or input file does not match the published schema."""

    exit_code = 2


class FanMismatch(ValidationError):
    """The two moment polytopes do not share a normal fan."""


class DomainError(GmaError, ValueError):
    """Argument outside the domain of an operation."""


class StateError(GmaError):
    """Operation requested in a regime where it is undefined."""


class GlueConflict(GmaError):
    """Regularized-max gluing violates a declared dominance region."""


# --- Solver failures ---


class SolverError(GmaError):
    """Base class for continuity / Newton failures."""


class ConeBreach(SolverError):
    """A state left the positive cone or lost the cone condition."""


class MaxIterExceeded(SolverError):
    """Newton iteration did not reach the tolerance."""


class LinearSolveStall(SolverError):
    """The Krylov inner solve failed to converge."""


class LineSearchFailure(SolverError):
    """Backtracking could not find a step that decreases the residual."""


class StepUnderflow(SolverError):
    """The continuity step fell below the minimum; the path was lost."""


class CompatibilityDefect(SolverError):
    """The discrete compatibility integral does not balance."""
