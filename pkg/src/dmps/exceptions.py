"""Exception types shared across the package."""


class DmpsError(Exception):
    """Base class for all package-specific errors."""


class InvalidInputError(DmpsError, ValueError):
    """Malformed or inconsistent user input (bad shapes, non-finite data, ...)."""


class DegenerateDataError(DmpsError, ValueError):
    """Input data admits no meaningful answer (e.g. all points identical)."""


class DegenerateSpectrumError(DmpsError, ValueError):
    """Spectral truncation removed every mode; the inverse operator is empty."""


class DivergenceError(DmpsError, RuntimeError):
    """A particle iteration produced non-finite values."""

    def __init__(self, message: str, iteration: int):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration
