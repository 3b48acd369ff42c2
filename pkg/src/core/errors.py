# errors.py - Exception hierarchy
"""
Named failures raised by the discretization, the solvers and the run
configuration. The CLI maps them to exit codes (see src/main.py).
"""


class NsBangBangError(Exception):
    """Base class for every error raised by this package"""


class ParameterError(NsBangBangError, ValueError):
    """A parameter lies outside its admissible domain"""


class ConfigError(NsBangBangError):
    """The run configuration is missing, malformed or inconsistent"""


class SolverError(NsBangBangError):
    """Base class for failures of the discrete solves"""


class SingularMatrix(SolverError):
    """Direct factorization met a zero pivot or could not reach the residual target"""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class NewtonDiverged(SolverError):
    """Newton's method hit the iteration cap or the damping floor"""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class MaxOuterIterations(SolverError):
    """The conditional-gradient loop stopped before the gap tolerance was met"""

    def __init__(self, message, history=None, final=None):
        super().__init__(message)
        self.history = history if history is not None else []
        self.final = final
