"""Exception hierarchy shared by every module."""


class OADError(Exception):
    """Base class for all toolkit errors."""


class FormatError(OADError, ValueError):
    """Malformed input file (annotation, score or detection format)."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MissingReferenceError(OADError, KeyError):
    """A record refers to a video, class, flag or instance that does not exist."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class ValidationError(OADError, ValueError):
    """A dataset violates one or more invariants."""

    def __init__(self, violations):
        self.violations = list(violations)
        head = self.violations[0] if self.violations else "invalid dataset"
        more = len(self.violations) - 1
        super().__init__(head + (f" (+{more} more)" if more > 0 else ""))


class DomainError(OADError, ValueError):
    """Argument outside the domain of an operation."""


class ConsistencyError(OADError, ValueError):
    """Arguments that contradict each other (e.g. a wrong positive count)."""


class CapacityError(OADError, RuntimeError):
    """Synthetic placement could not be satisfied."""
