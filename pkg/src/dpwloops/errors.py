"""Exception types shared by all modules."""


class DpwError(Exception):
    """Base class for every error raised by the package."""


class DomainError(DpwError, ValueError):
    """An argument lies outside the domain of an operation."""


class ShapeError(DpwError, ValueError):
    """Matrix sizes or grids do not match."""


class NotUnimodular(DpwError, ValueError):
    """det(gamma) is not identically 1."""


class NotInBigCell(DpwError):
    """The loop lies outside the big Birkhoff cell."""


class OutsideCell(DpwError):
    """The loop lies outside the identity Iwasawa cell."""


class PoleOnPath(DpwError):
    """A straight integration segment passes through a pole of the potential."""


class ModeError(DpwError, ValueError):
    """The requested integration mode does not apply to this potential."""


class NotAlgebraic(DpwError):
    """A sample is not a Laurent polynomial in the loop parameter."""


class Unsupported(DpwError, ValueError):
    """The operation is not available for this configuration."""


class InvariantViolation(DpwError):
    """A structural invariant failed; the message names where."""


class ConfigError(DpwError, ValueError):
    """A run configuration or input file is malformed."""

    def __init__(self, message, line=None, column=None, path=None):
        loc = []
        if path:
            loc.append(str(path))
        if line is not None:
            loc.append(f"line {line}, column {column}")
        super().__init__(f"{message} ({'; '.join(loc)})" if loc else message)
        self.line = line
        self.column = column
        self.path = path


__all__ = [
    "DpwError",
    "DomainError",
    "ShapeError",
    "NotUnimodular",
    "NotInBigCell",
    "OutsideCell",
    "PoleOnPath",
    "ModeError",
    "NotAlgebraic",
    "Unsupported",
    "InvariantViolation",
    "ConfigError",
]
