"""Reproducible runs: config validation, commands, reports and run comparison."""
from .config import ConfigError, load_config
from .report import ManifestMismatch, compare_runs
from .runner import run

__all__ = ["ConfigError", "ManifestMismatch", "compare_runs", "load_config", "run"]
