"""Exception hierarchy."""


class CombGPError(Exception):
    pass


class InputError(CombGPError, ValueError):
    """Caller supplied an argument outside an operation's domain."""


class NumericError(CombGPError, ArithmeticError):
    """A factorization or iterative solve failed."""


class RoutingError(CombGPError):
    """No legal path between the requested edges."""


class EnvError(CombGPError):
    """The environment cannot be constructed or stepped (e.g. negative cycle)."""

    def __init__(self, message: str, cycle: tuple | None = None):
        super().__init__(message)
        self.cycle = cycle


class ConfigError(CombGPError, ValueError):
    """Malformed configuration or network file."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
