"""Exception types shared across the package."""


class ParseError(ValueError):
    """Malformed problem file (bad syntax, unknown key). Carries a line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InvariantError(ValueError):
    """Semantically invalid data: a declared model or problem invariant is violated."""


class CflError(RuntimeError):
    """Requested time step exceeds the explicit stability limit."""


class SupportBreachError(RuntimeError):
    """Solution support reached the boundary collar of a vacuum-box run."""

    def __init__(self, message: str, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class NumericsError(RuntimeError):
    """An internal iteration failed to converge (carries the final bracket state)."""
