"""Exception hierarchy. Each class maps onto one CLI exit code."""


class UnilabError(Exception):
    exit_code = 1


class ConfigurationError(UnilabError, ValueError):
    """Invalid parameters, layouts or operator shapes."""

    exit_code = 2


class ResourceError(UnilabError, MemoryError):
    """A request would materialize something too large to hold densely."""

    exit_code = 2


class NumericalBreakdown(UnilabError, ArithmeticError):
    """The integrator could not meet its tolerance."""

    exit_code = 3

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class CheckpointCorruption(UnilabError, ValueError):
    exit_code = 2


class InvalidStateError(UnilabError, ValueError):
    """A density matrix failed a physicality check."""
