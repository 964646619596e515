"""Exception types raised by the library."""


class InvalidArgument(ValueError):
    """An argument violates a documented precondition."""


class UnsupportedDimension(InvalidArgument):
    """The operation is only defined for one-dimensional measures."""


class OutOfScopeOrder(InvalidArgument):
    """Derivative order outside the range covered by the construction."""


class PreconditionFailure(InvalidArgument):
    """A required certificate (e.g. a Bernstein constant) is unavailable."""


class Unreachable(ArithmeticError):
    """A target cannot be met within the search range."""


class NumericFailure(ArithmeticError):
    """A numerical procedure did not converge.

    ``diagnostics`` carries whatever the failing routine knew at the time.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class ParseError(ValueError):
    """A persisted record could not be read back."""

    def __init__(self, message, line=None, field=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.line = line
        self.field = field
