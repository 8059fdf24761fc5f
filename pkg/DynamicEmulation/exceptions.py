# In DynamicEmulation/exceptions.py

class EmulatorError(Exception):
    """Base exception for the library."""
    pass


class InputError(EmulatorError, ValueError):
    """Raised when an argument is malformed, non-finite or has the wrong shape."""
    pass


class SingularMatrixError(EmulatorError):
    """Raised when a Cholesky factorization breaks down."""

    def __init__(self, message: str, pivot: int):
        super().__init__(message)
        self.pivot = pivot


class DegenerateUpdateError(EmulatorError):
    """Raised when a partitioned inverse update has a nonpositive Schur complement."""

    def __init__(self, message: str, phi: float):
        super().__init__(message)
        self.phi = phi


class DegenerateResponseError(EmulatorError):
    """Raised when a response carries no variation to decompose or normalize by."""
    pass


class FitError(EmulatorError):
    """Raised when the GP for one basis coefficient cannot be fitted."""

    def __init__(self, message: str, index=None):
        super().__init__(message)
        self.index = index


class NeighborhoodError(EmulatorError):
    """Raised when growing a local neighborhood fails at some iteration."""

    def __init__(self, message: str, iteration: int):
        super().__init__(message)
        self.iteration = iteration


class StateError(EmulatorError):
    """Raised when a local state cannot proceed (e.g. no candidates left)."""
    pass


class DatasetError(EmulatorError):
    """Raised when a design or response file cannot be parsed or validated."""

    def __init__(self, message: str, path=None, line=None, column=None):
        super().__init__(message)
        self.path = path
        self.line = line
        self.column = column


class ConfigError(EmulatorError):
    """Raised for invalid experiment configurations."""
    pass


class SizeGuardError(EmulatorError):
    """Raised when a full-data fit is refused because the design is too large."""
    pass
