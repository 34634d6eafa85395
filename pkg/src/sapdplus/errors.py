"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid problem data, operator arguments, or run configuration."""


class InfeasibleScheduleError(RuntimeError):
    """The requested parameter rule has no solution for the given constants."""


class DivergenceError(RuntimeError):
    """An iterate blew up (non-finite or norm above the guard threshold)."""

    def __init__(self, message, iteration=None, stage=None):
        super().__init__(message)
        self.iteration = iteration
        self.stage = stage
