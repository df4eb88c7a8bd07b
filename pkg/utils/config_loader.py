#!/usr/bin/env python3
"""
SplitFlow Configuration Loader
Run configuration with flags > config file > environment > defaults precedence
"""

import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional

import structlog
import toml

from utils.validation import (InputValidator, SplitFlowError, ValidationError,
                              sanitize_log_message)

logger = structlog.get_logger('SplitFlow.Config')

DPS_ENV = 'SPLITFLOW_DPS'
LOG_LEVEL_ENV = 'SPLITFLOW_LOG_LEVEL'

DEFAULT_DPS = 50


class ConfigError(SplitFlowError):
    """Raised for unreadable or inconsistent configuration"""
    pass


@dataclass
class RunConfig:
    """Every option a subcommand can take"""
    subcommand: str = ''
    methods: List[str] = field(default_factory=list)
    model: str = 'kepler'
    epsilon: float = 1e-2
    eccentricity: float = 0.25
    elements: str = ''
    tau: float = 0.1
    taus: List[float] = field(default_factory=list)
    t_final: float = 1e4
    niter: int = 0
    sample_dt: float = 20.0
    output: str = ''
    plot_data: str = ''
    output_dir: str = 'solutions'
    seed: int = 0
    seeds: int = 16
    dps: int = DEFAULT_DPS
    tol: float = 1e-30
    compensated: bool = False
    fsal: bool = True
    allow_degraded: bool = False
    states: bool = False
    phase_error: bool = False
    jobs: int = 1
    all_methods: bool = False
    order: List[int] = field(default_factory=list)
    stages: int = 0
    kind: str = 'ABA'
    zero: List[str] = field(default_factory=list)
    solve_method: str = 'auto'
    log_level: str = 'WARNING'

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'RunConfig':
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"Unknown configuration keys: {', '.join(unknown)}")
        config = cls(**{key: value for key, value in data.items()})
        config.validate()
        return config

    def to_toml(self) -> str:
        return toml.dumps(self.to_dict())

    @classmethod
    def from_toml(cls, text: str) -> 'RunConfig':
        try:
            data = toml.loads(text)
        except toml.TomlDecodeError as e:
            raise ConfigError(f"Config file is not valid key = value TOML: {e}")
        return cls.from_dict(data)

    def validate(self):
        """Check value ranges; raises ValidationError"""
        for method_id in self.methods:
            if not InputValidator.validate_method_id(method_id):
                raise ValidationError(f"Invalid method id: {sanitize_log_message(method_id)}")

        if not InputValidator.validate_dps(self.dps):
            raise ValidationError(f"Precision must be between {InputValidator.MIN_DPS} "
                                  f"and {InputValidator.MAX_DPS} digits")

        if not InputValidator.validate_seed(self.seed):
            raise ValidationError("Seed must be a non-negative 32-bit integer")

        if not InputValidator.validate_step(self.tau):
            raise ValidationError("Step size must be finite and nonzero")

        for tau in self.taus:
            if not InputValidator.validate_step(tau):
                raise ValidationError(f"Invalid step size in list: {tau}")

        if self.order and not InputValidator.validate_order(self.order, symmetric=True):
            raise ValidationError("Order must be even and non-increasing, e.g. 10,6,4")

        for name in self.zero:
            if not InputValidator.validate_kernel_name(name):
                raise ValidationError(f"Invalid coefficient name: {sanitize_log_message(name)}")

        if self.epsilon < 0:
            raise ValidationError("epsilon must be non-negative")

        if self.jobs < 1 or self.seeds < 0 or self.niter < 0:
            raise ValidationError("jobs must be >= 1, seeds and niter >= 0")

        if self.model not in ('kepler', 'helio'):
            raise ValidationError(f"Unknown model: {sanitize_log_message(self.model)}")

        if self.kind not in ('ABA', 'ABAH', 'BAB'):
            raise ValidationError(f"Unknown method kind: {sanitize_log_message(self.kind)}")


def environment_defaults() -> Dict[str, Any]:
    """Defaults taken from the environment"""
    overrides: Dict[str, Any] = {}

    dps = os.environ.get(DPS_ENV)
    if dps:
        if not InputValidator.validate_dps(dps):
            raise ConfigError(f"{DPS_ENV} must be an integer between "
                              f"{InputValidator.MIN_DPS} and {InputValidator.MAX_DPS}")
        overrides['dps'] = int(dps)

    level = os.environ.get(LOG_LEVEL_ENV)
    if level:
        overrides['log_level'] = level.upper()

    return overrides


def load_config_file(path: str) -> Dict[str, Any]:
    """Read a key = value config file"""
    config_path = Path(path)
    if not config_path.is_file():
        raise ConfigError(f"Config file not found: {sanitize_log_message(path)}")

    try:
        data = toml.load(config_path)
    except (toml.TomlDecodeError, OSError) as e:
        raise ConfigError(f"Cannot read config file {config_path}: {e}")

    logger.info("config file loaded", path=str(config_path), keys=sorted(data))
    return data


def build_config(flags: Dict[str, Any], config_file: Optional[str] = None) -> RunConfig:
    """Merge defaults, environment, config file and flags (None means unset)"""
    merged = RunConfig().to_dict()
    merged.update(environment_defaults())

    if config_file:
        file_values = load_config_file(config_file)
        unknown = sorted(set(file_values) - set(merged))
        if unknown:
            raise ConfigError(f"Unknown configuration keys: {', '.join(unknown)}")
        merged.update(file_values)

    merged.update({key: value for key, value in flags.items()
                   if value is not None and key in merged})

    return RunConfig.from_dict(merged)
