"""Error types shared across the package."""


class ParameterError(ValueError):
    """A numerical parameter is outside its admissible range."""


class DomainError(ValueError):
    """An input object is malformed or incompatible with the operation."""


class UnsupportedConfigurationError(NotImplementedError):
    """The requested combination is valid in principle but not implemented."""


class RefinementError(RuntimeError):
    """An ODE solve failed its step-halving accuracy check."""

    def __init__(self, message, defect=None, suggested_steps=None):
        super().__init__(message)
        self.defect = defect
        self.suggested_steps = suggested_steps


class NonFiniteStateError(FloatingPointError):
    """A simulated state became NaN or infinite."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ConfigError(ValueError):
    """Bad configuration file or command line input."""
