"""Exception hierarchy shared by all randext modules.

Two families matter to callers (and to the CLI's exit codes): bad inputs
(``ValidationError``, exit 1) and failures of a computation's contract at
runtime, such as stalls or violated bounds (``ComputationError``, exit 2).
"""


class RandextError(Exception):
    """Base class for all randext errors."""


class ValidationError(RandextError, ValueError):
    """Invalid user input: malformed config, bad table, infeasible request."""


class ComputationError(RandextError, RuntimeError):
    """A computation could not fulfil its contract (stall, cap, bound)."""


class StallError(ComputationError):
    """Progress stopped before the requested output was produced.

    Carries whatever partial results were available so callers can inspect
    or resume.  ``partial`` is operation-specific (documented per call site).
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial
