"""Declarative experiment runner: YAML configs in, hashed CSV tables out."""

from .config import (EXPERIMENTS, ConfigError, canonical_json, config_hash, load_config, validate,
                     with_overrides)
from .runner import ResultTable, RunResult, run

__all__ = [
    "EXPERIMENTS", "ConfigError", "ResultTable", "RunResult", "canonical_json", "config_hash",
    "load_config", "run", "validate", "with_overrides",
]
