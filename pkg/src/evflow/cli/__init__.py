"""Experiment runner for the command line."""
from .main import ConfigError, load_config, main, run

__all__ = ["ConfigError", "load_config", "main", "run"]
