"""Exception hierarchy shared across the package."""


class LocBridgeError(Exception):
    """Base class for all errors raised by locbridge."""


class ParameterError(LocBridgeError, ValueError):
    """Invalid hyper-parameter (non-positive bandwidth, oversize stencil, ...)."""


class DataError(LocBridgeError, ValueError):
    """Training or query data is malformed or not finite."""


class ConvergenceError(LocBridgeError, RuntimeError):
    """Sinkhorn scaling did not reach the requested tolerance.

    Attributes
    ----------
    residual : float
        Maximum absolute row-sum deviation at the last iterate.
    n_iter : int
        Number of iterations performed.
    alpha : int or None
        Coordinate whose localized fit failed (0-based), if applicable.
    """

    def __init__(self, message, residual, n_iter, alpha=None):
        super().__init__(message)
        self.residual = residual
        self.n_iter = n_iter
        self.alpha = alpha


class FarFieldError(LocBridgeError, FloatingPointError):
    """Query is so far from the data that every kernel weight underflows."""


class NumericalError(LocBridgeError, ArithmeticError):
    """Eigendecomposition or other linear-algebra failure."""


class BlowUpError(LocBridgeError, FloatingPointError):
    """A chain or trajectory left the admissible range.

    Attributes
    ----------
    step : int
        Index of the step at which the blow-up was detected.
    """

    def __init__(self, message, step):
        super().__init__(message)
        self.step = step


class IntegrityError(LocBridgeError, IOError):
    """A persisted file failed validation (bad magic, hash mismatch, ...)."""
