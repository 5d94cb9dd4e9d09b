#!/usr/bin/env python3
"""
Configuration manager for OLAT Relight

Settings are layered: built-in defaults, then the user defaults file
(~/.olat_relight/config.yaml), then a plain-text key=value job file, then
explicit command-line flags.
"""

import os
import re
import yaml
import logging
from dataclasses import asdict, dataclass
from typing import Any, Callable, Dict, Optional, Tuple

from olat_relight.core.errors import ConfigError
from olat_relight.core.estimate import METHODS, EstimationConfig
from olat_relight.core.imagecore import ImageDims
from olat_relight.core.relight import LossWeights
from olat_relight.extractors import EXTRACTORS

logger = logging.getLogger(__name__)

HOME_ENV_VAR = "OLAT_RELIGHT_HOME"
OUTPUT_FORMATS = ("pfm", "png")

LINE_PATTERN = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*?)\s*$")


def default_home() -> str:
    """Directory holding the user defaults file and the operation logs"""
    return os.environ.get(HOME_ENV_VAR) or os.path.expanduser("~/.olat_relight")


def _auto(parse: Callable[[Any], Any]) -> Callable[[Any], Any]:
    def parse_or_auto(value):
        if value is None or (isinstance(value, str) and value.strip().lower() == "auto"):
            return None
        return parse(value)
    return parse_or_auto


def _choice(options) -> Callable[[Any], str]:
    def parse(value):
        value = str(value).strip()
        if value not in options:
            raise ValueError(f"expected one of {tuple(options)}")
        return value
    return parse


def _integer(value) -> int:
    if isinstance(value, bool):
        raise ValueError("expected an integer")
    if isinstance(value, float) and not value.is_integer():
        raise ValueError("expected an integer")
    return int(value)


def _number(value) -> float:
    if isinstance(value, bool):
        raise ValueError("expected a number")
    return float(value)


def _flag(value) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("true", "yes", "on", "1"):
        return True
    if text in ("false", "no", "off", "0"):
        return False
    raise ValueError("expected true or false")


PARSERS: Dict[str, Callable[[Any], Any]] = {
    "gamma_min": _number,
    "gamma_max": _number,
    "gamma_grid": _integer,
    "gamma_max_iter": _integer,
    "gamma_xatol": _number,
    "lambda1": _number,
    "lambda2": _number,
    "lambda_prior": _number,
    "blend_temperature": _auto(_number),
    "iterations": _integer,
    "step_size": _auto(_number),
    "method": _choice(METHODS),
    "extractor": _choice(EXTRACTORS),
    "noise_floor": _number,
    "output_format": _choice(OUTPUT_FORMATS),
    "env_width": _integer,
    "crop_to_mask": _flag,
    "crop_margin": _integer,
    "jobs": _auto(_integer),
}


def coerce(key: str, value: Any) -> Any:
    """
    Type-check one setting

    Args:
        key: Setting name
        value: Raw value (string from a job file or YAML scalar)

    Returns:
        The parsed value; None stands for "auto"
    """
    if key not in PARSERS:
        raise ConfigError(f"Unknown configuration key '{key}'")
    try:
        return PARSERS[key](value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid value {value!r} for '{key}': {e}") from e


def parse_job_file(path: str) -> Dict[str, Any]:
    """
    Read a key=value job file

    Blank lines and lines starting with # are skipped; matching single or
    double quotes around a value are stripped.

    Args:
        path: Job file

    Returns:
        Parsed settings
    """
    settings = {}
    with open(path, "r") as f:
        for number, line in enumerate(f, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            match = LINE_PATTERN.match(line)
            if not match:
                raise ConfigError(f"{path}:{number}: expected key=value, got {stripped!r}")
            key, value = match.groups()
            if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
                value = value[1:-1]
            settings[key] = coerce(key, value)
    return settings


@dataclass(frozen=True)
class JobConfig:
    """Fully resolved settings of one command"""

    gamma_min: float = 0.2
    gamma_max: float = 5.0
    gamma_grid: int = 11
    gamma_max_iter: int = 200
    gamma_xatol: float = 1e-4
    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda_prior: float = 0.1
    blend_temperature: Optional[float] = None
    iterations: int = 200
    step_size: Optional[float] = None
    method: str = "ridge"
    extractor: str = "identity"
    noise_floor: float = 0.05
    output_format: str = "pfm"
    env_width: int = 64
    jobs: Optional[int] = None
    crop_to_mask: bool = False
    crop_margin: int = 0

    def __post_init__(self):
        if not self.gamma_min < self.gamma_max:
            raise ConfigError("gamma_min must be below gamma_max")
        if self.gamma_grid < 2:
            raise ConfigError("gamma_grid must be at least 2")
        if self.gamma_max_iter < 0 or not self.gamma_xatol > 0:
            raise ConfigError("gamma_max_iter must be >= 0 and gamma_xatol > 0")
        if not 0.0 <= self.noise_floor < 1.0:
            raise ConfigError("noise_floor must be in [0, 1)")
        if self.env_width < 2 or self.env_width % 2:
            raise ConfigError("env_width must be an even number >= 2")
        if self.jobs is not None and self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if self.crop_margin < 0:
            raise ConfigError("crop_margin must be >= 0")

    @property
    def gamma_bounds(self) -> Tuple[float, float]:
        return (self.gamma_min, self.gamma_max)

    @property
    def env_dims(self) -> ImageDims:
        return ImageDims(self.env_width, self.env_width // 2)

    def loss_weights(self) -> LossWeights:
        return LossWeights(self.lambda1, self.lambda2)

    def estimation(self) -> EstimationConfig:
        return EstimationConfig(
            lambda_prior=self.lambda_prior,
            blend_temperature=self.blend_temperature,
            iterations=self.iterations,
            step_size=self.step_size,
            method=self.method,
        )


DEFAULTS: Dict[str, Any] = asdict(JobConfig())


class ConfigManager:
    """
    Resolves the settings of a command from every configuration layer
    """

    def __init__(self, job_path: Optional[str] = None, home: Optional[str] = None):
        """
        Initialize the configuration manager

        Args:
            job_path: Optional key=value job file (--config)
            home: Directory of the user defaults file. If None, uses
                $OLAT_RELIGHT_HOME or ~/.olat_relight.
        """
        self.home = home or default_home()
        self.defaults_path = os.path.join(self.home, "config.yaml")
        self.job_path = job_path

        self.settings: Dict[str, Any] = dict(DEFAULTS)
        self.settings.update(self._load_user_defaults())
        if job_path:
            if not os.path.exists(job_path):
                raise ConfigError(f"Job file not found: {job_path}")
            self.settings.update(parse_job_file(job_path))

    def _load_user_defaults(self) -> Dict[str, Any]:
        """
        Load the user defaults file if it exists

        Returns:
            Parsed settings, empty when the file is absent
        """
        if not os.path.exists(self.defaults_path):
            return {}
        try:
            with open(self.defaults_path, "r") as f:
                data = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigError(f"{self.defaults_path}: invalid YAML ({e})") from e
        if data is None:
            return {}
        if not isinstance(data, dict):
            raise ConfigError(f"{self.defaults_path}: expected a mapping of settings")
        logger.debug(f"Loaded user defaults from {self.defaults_path}")
        return {str(key): coerce(str(key), value) for key, value in data.items()}

    def override(self, **flags) -> "ConfigManager":
        """
        Apply command-line flags; None means the flag was not given

        Returns:
            self
        """
        for key, value in flags.items():
            if value is not None:
                self.settings[key] = coerce(key, value)
        return self

    def get(self, key: str) -> Any:
        if key not in self.settings:
            raise ConfigError(f"Unknown configuration key '{key}'")
        return self.settings[key]

    def job_config(self) -> JobConfig:
        """The resolved, validated settings"""
        return JobConfig(**self.settings)
