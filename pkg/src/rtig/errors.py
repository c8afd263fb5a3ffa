"""Exception hierarchy shared by the library and the command line."""


class RtigError(Exception):
    """Base class. ``code`` is the machine-readable prefix used by the CLI."""

    code = "error"
    exit_code = 1


class ValidationError(RtigError, ValueError):
    code = "validation-error"
    exit_code = 2


class NumericalError(RtigError, ArithmeticError):
    code = "numeric-error"
    exit_code = 3


class DegenerateLevel(RtigError):
    """Raised when a level has zero variability (point-mass response times)."""

    code = "degenerate-level"
    exit_code = 4


class NotApplicable(RtigError):
    """An estimator does not apply; ``reason`` is a short kebab-case tag."""

    code = "not-applicable"
    exit_code = 2

    def __init__(self, reason, message=None):
        self.reason = reason
        super().__init__(message or reason)


class PersistentOverload(NumericalError):
    code = "persistent-overload"
