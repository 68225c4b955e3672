"""Exception taxonomy.

ValidationError covers bad user input (parameters, configs, incompatible
shapes); NumericalError covers solver failures (divergent Newton iterations,
PDE blow-up, missing root brackets). The CLI maps them to exit codes 2 and 3.
"""


class CyclewaveError(Exception):
    pass


class ValidationError(CyclewaveError):
    pass


class NumericalError(CyclewaveError):
    pass


class NewtonError(NumericalError):
    """Newton iteration failed to converge."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class BlowUpError(NumericalError):
    """A field left the trust region (PDE blow-up or NaN)."""

    def __init__(self, message, time=None, max_value=None):
        super().__init__(message)
        self.time = time
        self.max_value = max_value


class BracketError(NumericalError):
    """A root or event could not be bracketed in the given range."""
