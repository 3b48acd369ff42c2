# config.py - Run configuration
"""
Run configuration for the benchmark CLI.

The JSON document has the keys nu, bounds, mesh, ladder, solver, ocp,
estimator and output. Every key is optional; missing entries take the
defaults below.
"""

import json
import math
import os
from dataclasses import dataclass, field, asdict, fields

from src.core.errors import ConfigError
from src.core.logger import get_logger


@dataclass(frozen=True)
class BoundsConfig:
    a: tuple = (-1.0, -1.0)
    b: tuple = (1.0, 1.0)


@dataclass(frozen=True)
class MeshConfig:
    type: str = "square"
    n: int = 8


@dataclass(frozen=True)
class LadderConfig:
    levels: int = 4
    mode: str = "uniform"
    theta: float = 0.5


@dataclass(frozen=True)
class SolverConfig:
    newton_tol: float = 1e-10
    newton_max: int = 30


@dataclass(frozen=True)
class OcpConfig:
    gap_tol: float = 1e-8
    max_outer: int = 50
    line_search_evals: int = 20


@dataclass(frozen=True)
class EstimatorConfig:
    t_prime: float = 2.0
    p: float = 3.0
    gamma: float = 1.0
    c_b: float = 0.5
    c_l125: float = math.inf
    marking: str = "adjoint"


@dataclass(frozen=True)
class OutputConfig:
    csv: str = "results.csv"
    vtk: str = None


@dataclass(frozen=True)
class RunConfig:
    """Complete configuration of one CLI run"""
    nu: float = 1.0
    bounds: BoundsConfig = field(default_factory=BoundsConfig)
    mesh: MeshConfig = field(default_factory=MeshConfig)
    ladder: LadderConfig = field(default_factory=LadderConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    ocp: OcpConfig = field(default_factory=OcpConfig)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def to_dict(self):
        """JSON-shaped dictionary of the configuration"""
        data = asdict(self)
        data["bounds"] = {"a": list(self.bounds.a), "b": list(self.bounds.b)}
        if math.isinf(self.estimator.c_l125):
            data["estimator"]["c_l125"] = None
        return data

    @classmethod
    def from_dict(cls, data):
        """Build a configuration from a JSON-shaped dictionary"""
        if not isinstance(data, dict):
            raise ConfigError("configuration root must be a JSON object")

        sections = {
            "bounds": BoundsConfig,
            "mesh": MeshConfig,
            "ladder": LadderConfig,
            "solver": SolverConfig,
            "ocp": OcpConfig,
            "estimator": EstimatorConfig,
            "output": OutputConfig,
        }
        unknown = set(data) - set(sections) - {"nu"}
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")

        kwargs = {}
        if "nu" in data:
            kwargs["nu"] = _as_float(data["nu"], "nu")
        for key, section_cls in sections.items():
            if key in data:
                kwargs[key] = _build_section(section_cls, data[key], key)

        config = cls(**kwargs)
        config.validate()
        return config

    def validate(self):
        """Raise ConfigError on inconsistent values"""
        if not self.nu > 0:
            raise ConfigError(f"nu must be positive, got {self.nu}")
        if len(self.bounds.a) != 2 or len(self.bounds.b) != 2:
            raise ConfigError("bounds.a and bounds.b must have two entries")
        if any(lo > hi for lo, hi in zip(self.bounds.a, self.bounds.b)):
            raise ConfigError(f"bounds must satisfy a <= b, got a={self.bounds.a}, b={self.bounds.b}")
        if self.mesh.type != "square":
            raise ConfigError(f"unsupported mesh type '{self.mesh.type}'")
        if self.mesh.n < 1:
            raise ConfigError("mesh.n must be at least 1")
        if self.ladder.levels < 1:
            raise ConfigError("ladder.levels must be at least 1")
        if self.ladder.mode not in ("uniform", "adaptive"):
            raise ConfigError(f"ladder.mode must be 'uniform' or 'adaptive', got '{self.ladder.mode}'")
        if not 0.0 < self.ladder.theta <= 1.0:
            raise ConfigError("ladder.theta must lie in (0, 1]")
        if not self.solver.newton_tol > 0 or self.solver.newton_max < 1:
            raise ConfigError("solver.newton_tol must be positive and solver.newton_max at least 1")
        if not self.ocp.gap_tol > 0 or self.ocp.max_outer < 1:
            raise ConfigError("ocp.gap_tol must be positive and ocp.max_outer at least 1")
        if not 2.0 <= self.estimator.t_prime <= 4.0:
            raise ConfigError("estimator.t_prime must lie in [2, 4]")
        if not 2.0 < self.estimator.p <= 4.0:
            raise ConfigError("estimator.p must exceed the dimension n = 2 and be at most 4")
        if not 0.5 < self.estimator.gamma <= 1.0:
            raise ConfigError("estimator.gamma must lie in (n/(n+2), 1] = (0.5, 1]")
        if not self.estimator.c_b > 0:
            raise ConfigError("estimator.c_b must be positive")
        if self.estimator.marking not in ("adjoint", "state"):
            raise ConfigError("estimator.marking must be 'adjoint' or 'state'")


def _as_float(value, name):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"'{name}' must be a number, got {value!r}")
    return float(value)


def _build_section(section_cls, raw, name):
    """Convert one JSON object into its dataclass, checking key names and types"""
    if not isinstance(raw, dict):
        raise ConfigError(f"'{name}' must be a JSON object")

    known = {f.name: f for f in fields(section_cls)}
    unknown = set(raw) - set(known)
    if unknown:
        raise ConfigError(f"unknown keys in '{name}': {sorted(unknown)}")

    defaults = section_cls()
    values = {}
    for key, value in raw.items():
        default = getattr(defaults, key)
        label = f"{name}.{key}"
        if isinstance(default, tuple):
            if not isinstance(value, list) or not all(
                    isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
                raise ConfigError(f"'{label}' must be a list of numbers")
            values[key] = tuple(float(v) for v in value)
        elif isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"'{label}' must be a boolean")
            values[key] = value
        elif isinstance(default, int):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"'{label}' must be an integer")
            values[key] = value
        elif isinstance(default, float):
            if value is None and key == "c_l125":
                values[key] = math.inf
            else:
                values[key] = _as_float(value, label)
        else:
            # str or optional path
            if value is not None and not isinstance(value, str):
                raise ConfigError(f"'{label}' must be a string or null")
            values[key] = value
    return section_cls(**values)


def load_config(path=None):
    """Read a JSON configuration file; None gives the defaults"""
    logger = get_logger()
    if path is None:
        logger.info("No configuration file given, using defaults")
        return RunConfig()

    if not os.path.exists(path):
        raise ConfigError(f"configuration file not found: {path}")

    try:
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
    except json.JSONDecodeError as e:
        raise ConfigError(f"configuration file {path} is not valid JSON: {e}") from e

    config = RunConfig.from_dict(data)
    logger.info(f"Configuration loaded from {path}")
    return config
