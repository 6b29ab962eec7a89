#!/usr/bin/env python3
"""
Configuration Manager for the Separation Toolkit

Handles loading, validation, and management of run parameters from YAML
configuration files. Supports:
- Environment variable substitution (${VAR} and ${VAR:default})
- Override files deep-merged over the base configuration
- Dotted-key CLI overrides (training.epochs=5)
- Parameter validation and defaults
- Typed access to the front-end, model, training and evaluation sections
"""

import copy
import logging
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Union

import yaml

from .dsp_core import FRAME_HOP, LOG_FLOOR, MEL_BAND_COUNT, MEL_FMAX, MEL_FMIN, SAMPLE_RATE, WINDOW_LEN
from .errors import SeparationError
from .targets import get_method
from .training import TrainingConfig

logger = logging.getLogger(__name__)

ENV_PATTERN = r'\$\{([A-Za-z_][A-Za-z0-9_]*)(?::([^}]*))?\}'


@dataclass
class FrontEndConfig:
    """Fixed analysis settings; other values are rejected by validation"""
    sample_rate: int = SAMPLE_RATE
    window_len: int = WINDOW_LEN
    frame_hop: int = FRAME_HOP
    mel_band_count: int = MEL_BAND_COUNT
    fmin: float = MEL_FMIN
    fmax: float = MEL_FMAX
    log_floor: float = LOG_FLOOR

    def __post_init__(self):
        # YAML 1.1 reads "1e-8" as a string
        for name in ("sample_rate", "window_len", "frame_hop", "mel_band_count"):
            setattr(self, name, int(getattr(self, name)))
        for name in ("fmin", "fmax", "log_floor"):
            setattr(self, name, float(getattr(self, name)))


@dataclass
class EvaluationConfig:
    si_sdr_cap_db: float = 100.0
    include_clean: bool = False

    def __post_init__(self):
        self.si_sdr_cap_db = float(self.si_sdr_cap_db)
        if isinstance(self.include_clean, str):
            self.include_clean = self.include_clean.strip().lower() in ("1", "true", "yes", "on")


DEFAULT_CONFIG: Dict[str, Any] = {
    "global": {
        "logging": {
            "level": "INFO",
            "format": "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
            "log_file": None,
        },
        "paths": {
            "output_dir": "./runs/default",
        },
    },
    "front_end": {
        "sample_rate": SAMPLE_RATE,
        "window_len": WINDOW_LEN,
        "frame_hop": FRAME_HOP,
        "mel_band_count": MEL_BAND_COUNT,
        "fmin": MEL_FMIN,
        "fmax": MEL_FMAX,
        "log_floor": LOG_FLOOR,
    },
    "model": {
        "layer_count": 2,
        "cell_count": 64,
    },
    "training": {
        "method": "log-fbank masking",
        "manifest": None,
        "epochs": 50,
        "learning_rate": 1e-3,
        "batch_size": 4,
        "momentum": 0.9,
        "clip_norm": 5.0,
        "seed": 0,
        "checkpoint_every": 10,
        "validation_fraction": 0.1,
        "workers": None,
        "warmup_epochs": 0,
        "objective_lr_scale": {"masking": 10.0},
    },
    "evaluation": {
        "si_sdr_cap_db": 100.0,
        "include_clean": False,
    },
}


def parse_override(assignment: str) -> Dict[str, Any]:
    """
    Turn ``a.b.c=value`` into ``{"a": {"b": {"c": value}}}``.

    The value is parsed as YAML, so numbers, booleans and null keep their types.
    """
    if "=" not in assignment:
        raise SeparationError(f"override '{assignment}' must look like key.path=value")
    key_path, raw_value = assignment.split("=", 1)
    keys = [k for k in key_path.strip().split(".") if k]
    if not keys:
        raise SeparationError(f"override '{assignment}' has an empty key")
    value = yaml.safe_load(raw_value) if raw_value.strip() else None
    nested: Dict[str, Any] = {keys[-1]: value}
    for key in reversed(keys[:-1]):
        nested = {key: nested}
    return nested


class ConfigManager:
    """
    Manages loading and accessing configuration for separation runs.

    Features:
    - YAML configuration file loading
    - Environment variable substitution
    - Override files and CLI parameter overrides
    - Parameter validation
    - Default value handling
    """

    def __init__(self, config_file: Optional[Union[str, Path]] = None):
        """
        Initialize configuration manager.

        Args:
            config_file: Path to YAML configuration file. Defaults to config/config.yaml
        """
        self.config_file = Path(config_file) if config_file else Path("config/config.yaml")
        self.config: Dict[str, Any] = {}
        self.cli_overrides: Dict[str, Any] = {}

        self._load_configuration()

    def _load_configuration(self):
        """Load and parse configuration file with environment variable substitution"""
        self.config = copy.deepcopy(DEFAULT_CONFIG)
        if not self.config_file.exists():
            logger.warning(f"Configuration file not found: {self.config_file}, using defaults")
            return

        try:
            with open(self.config_file, "r") as f:
                loaded = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise SeparationError(f"Failed to parse configuration {self.config_file}: {e}") from e
        if not isinstance(loaded, dict):
            raise SeparationError(f"Configuration {self.config_file} must be a mapping")

        self._substitute_env_vars_in_dict(loaded)
        self._deep_merge(self.config, loaded)
        logger.info(f"Configuration loaded from {self.config_file}")

    def _replace_var_in_string(self, text: str) -> Any:
        """Replace environment variables in a string"""
        def replace_var(match):
            var_name = match.group(1)
            default_value = match.group(2)

            if var_name in os.environ:
                return os.environ[var_name]
            elif default_value is not None:
                return default_value
            else:
                logger.warning(f"Environment variable not found: {var_name}")
                return match.group(0)

        replaced = re.sub(ENV_PATTERN, replace_var, text)
        if replaced != text:
            # A fully substituted scalar gets its YAML type back ("5" -> 5)
            try:
                return yaml.safe_load(replaced)
            except yaml.YAMLError:
                return replaced
        return replaced

    def _substitute_env_vars_in_dict(self, d: Dict):
        """Recursively substitute environment variables in a dictionary"""
        for key, value in d.items():
            if isinstance(value, str):
                d[key] = self._replace_var_in_string(value)
            elif isinstance(value, dict):
                self._substitute_env_vars_in_dict(value)

    def _deep_merge(self, base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
        """
        Deep merge override dictionary into base dictionary.

        Args:
            base: Base dictionary to merge into
            override: Override dictionary with values to merge

        Returns:
            Merged dictionary (base is modified in-place)
        """
        for key, value in override.items():
            if key in base and isinstance(base[key], dict) and isinstance(value, dict):
                self._deep_merge(base[key], value)
            else:
                base[key] = value
        return base

    def apply_override_file(self, override_file: Union[str, Path]):
        """Deep-merge another YAML file (e.g. config/large_scale.yaml) over the configuration."""
        override_file = Path(override_file)
        if not override_file.exists():
            raise FileNotFoundError(f"Override file not found: {override_file}")
        with open(override_file, "r") as f:
            override = yaml.safe_load(f) or {}
        self._substitute_env_vars_in_dict(override)
        self._deep_merge(self.config, override)
        logger.info(f"Applied override file {override_file}")

    def apply_cli_overrides(self, overrides: Union[Dict[str, Any], Iterable[str]]):
        """
        Apply command-line parameter overrides.

        Args:
            overrides: Nested dictionary, or ``key.path=value`` strings
        """
        if not isinstance(overrides, dict):
            merged: Dict[str, Any] = {}
            for assignment in overrides:
                self._deep_merge(merged, parse_override(assignment))
            overrides = merged
        self._deep_merge(self.cli_overrides, copy.deepcopy(overrides))
        self._deep_merge(self.config, overrides)
        logger.info(f"Applied CLI overrides: {overrides}")

    def get(self, key_path: str, default: Any = None) -> Any:
        """
        Get a value using dot notation (e.g. "training.epochs").
        """
        value: Any = self.config
        for part in key_path.split("."):
            if isinstance(value, dict) and part in value:
                value = value[part]
            else:
                return default
        return value

    def get_global_config(self) -> Dict[str, Any]:
        """Get global configuration"""
        return self.config.get("global", {})

    def get_logging_config(self) -> Dict[str, Any]:
        return self.get_global_config().get("logging", {})

    def get_paths_config(self) -> Dict[str, Any]:
        """Get paths configuration"""
        return self.get_global_config().get("paths", {})

    def get_front_end_config(self) -> FrontEndConfig:
        return FrontEndConfig(**self.config.get("front_end", {}))

    def get_evaluation_config(self) -> EvaluationConfig:
        return EvaluationConfig(**self.config.get("evaluation", {}))

    def resolve_path(self, value: Optional[str]) -> Optional[Path]:
        """Relative paths are taken relative to the configuration file's directory."""
        if value in (None, ""):
            return None
        path = Path(str(value))
        return path if path.is_absolute() else self.config_file.parent / path

    def get_manifest_path(self) -> Optional[Path]:
        return self.resolve_path(self.get("training.manifest"))

    def get_output_dir(self) -> Path:
        return self.resolve_path(self.get("global.paths.output_dir")) or Path("runs/default")

    def get_training_config(self) -> TrainingConfig:
        """
        Build the TrainingConfig named by the ``training`` and ``model`` sections.

        Raises:
            InvalidMethodError: if training.method is not one of the eight methods
        """
        training = self.config.get("training", {})
        model = self.config.get("model", {})
        return TrainingConfig(
            method=get_method(training.get("method", "")),
            epochs=int(training["epochs"]),
            learning_rate=float(training["learning_rate"]),
            batch_size=int(training["batch_size"]),
            momentum=float(training["momentum"]),
            clip_norm=float(training["clip_norm"]),
            seed=int(training.get("seed") or 0),
            checkpoint_every=int(training["checkpoint_every"]),
            validation_fraction=float(training["validation_fraction"]),
            layer_count=int(model["layer_count"]),
            cell_count=int(model["cell_count"]),
            workers=int(training["workers"]) if training.get("workers") else None,
            warmup_epochs=int(training.get("warmup_epochs") or 0),
            objective_lr_scale={str(k): float(v) for k, v in (training.get("objective_lr_scale") or {}).items()},
        )

    def validate_configuration(self) -> bool:
        """
        Validate configuration for required parameters and consistency.

        Returns:
            True if valid, False otherwise
        """
        try:
            required_sections = ["global", "front_end", "model", "training"]
            for section in required_sections:
                if section not in self.config:
                    logger.error(f"Missing required configuration section: {section}")
                    return False

            front_end = self.get_front_end_config()
            if front_end != FrontEndConfig():
                logger.error(f"Unsupported front_end settings {front_end}; only {FrontEndConfig()} is supported")
                return False

            self.get_training_config()
            self.get_evaluation_config()

            logger.info("Configuration validation passed")
            return True

        except (SeparationError, KeyError, TypeError, ValueError) as e:
            logger.error(f"Configuration validation failed: {e}")
            return False

    def __repr__(self) -> str:
        """String representation"""
        return f"ConfigManager(file={self.config_file})"


def create_config_manager(config_file: Optional[Union[str, Path]] = None) -> ConfigManager:
    """
    Factory method to create a ConfigManager instance.

    Args:
        config_file: Path to configuration file (optional)

    Returns:
        ConfigManager instance
    """
    return ConfigManager(config_file=config_file)
