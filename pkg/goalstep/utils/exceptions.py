class UnsupportedOrderError(ValueError):
    """
    Raised when order conditions are requested above the supported order.
    """


class ConfigurationError(ValueError):
    """
    Raised for inconsistent or unknown experiment settings (unknown ids, incompatible scheme/quadrature pairings,
    missing dense output).
    """


class InsufficientDataError(ValueError):
    """
    Raised when too few usable points remain for a log-log fit.
    """


class BlowUpError(FloatingPointError):
    """
    Raised when a stage derivative or state becomes non-finite.
    """
    
    def __init__(self, t: float, dt: float, message: str | None = None):
        """
        Parameters
        ----------
        t : float
            Start time of the failed step.
        dt : float
            Size of the failed step.
        message : str | None, optional
            Custom message, by default None.
        """
        
        self.t = t
        self.dt = dt
        if message is None:
            message = f'[GOALSTEP] Non-finite value encountered in step t={t!r}, dt={dt!r}.'
        super().__init__(message)


class StepFailureError(ArithmeticError):
    """
    Raised when the linear system of an implicit step is singular. The caller must shrink dt.
    """
    
    def __init__(self, t: float, dt: float, message: str | None = None):
        self.t = t
        self.dt = dt
        if message is None:
            message = f'[GOALSTEP] Singular step system at t={t!r}, dt={dt!r}.'
        super().__init__(message)


class StepLimitError(RuntimeError):
    """
    Raised when an adaptive run exceeds its maximum step count.
    """


class NonConvergenceError(RuntimeError):
    """
    Raised when an iterative refinement loop fails to meet its tolerance.
    """
