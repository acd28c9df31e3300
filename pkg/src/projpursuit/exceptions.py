"""Exception hierarchy used across the package."""


class PPTestError(Exception):
    """Base class for all package errors."""


class InputError(PPTestError, ValueError):
    """Invalid or inconsistent user input."""


class SolverError(PPTestError, RuntimeError):
    """A numerical routine failed to produce an admissible answer."""

    def __init__(self, message, stage=None, diagnostics=None):
        if stage is not None:
            message = f"[{stage}] {message}"
        super().__init__(message)
        self.stage = stage
        self.diagnostics = diagnostics or {}


class ContractError(PPTestError):
    """A user-supplied component violated its documented contract."""
