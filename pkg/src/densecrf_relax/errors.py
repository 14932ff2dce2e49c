"""Exception types shared across the package."""


class DenseCRFError(Exception):
    """Base class for all package errors."""


class InvalidInput(DenseCRFError, ValueError):
    """Shapes, counts or values that violate an operation's preconditions."""


class InvalidParameter(DenseCRFError, ValueError):
    """A tuning parameter outside its admissible range."""


class UnsupportedCompat(DenseCRFError, ValueError):
    """The label compatibility variant is not handled by the requested path."""


class ParseError(InvalidInput):
    """Malformed input file. Carries the offending line number when known."""

    def __init__(self, message, path=None, line=None):
        if path is not None:
            loc = f"{path}:{line}: " if line is not None else f"{path}: "
        else:
            loc = f"line {line}: " if line is not None else ""
        super().__init__(loc + message)
        self.path = path
        self.line = line
