"""
Core functionality: logging, errors and run configuration
"""

from src.core.logger import get_logger
from src.core.errors import (
    NsBangBangError,
    ParameterError,
    ConfigError,
    SolverError,
    SingularMatrix,
    NewtonDiverged,
    MaxOuterIterations,
)
from src.core.config import RunConfig, load_config
