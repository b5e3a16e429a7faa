"""Exception hierarchy shared by the pipeline services and the CLI."""
from typing import Any


class OaeError(Exception):
    """Base error carrying a machine-readable code."""

    code: str = "error"
    exit_code: int = 1

    def __init__(self, message: str, *, code: str | None = None, **details: Any):
        self.message = message
        if code is not None:
            self.code = code
        self.details = details
        super().__init__(f"{self.code}: {message}")


class InputError(OaeError):
    """Malformed or out-of-range input data."""

    code = "input-error"
    exit_code = 2


class NumericalError(OaeError):
    """A computation could not produce a defined result."""

    code = "numerical-failure"
    exit_code = 3
