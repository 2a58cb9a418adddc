"""Curved laminate corner-unfolding analysis with a GenEO-preconditioned solver."""

from .config import RunConfig, load_config, load_preset, parse_config
from .runner import run, sweep

__all__ = ["RunConfig", "load_config", "load_preset", "parse_config", "run", "sweep"]
__version__ = "0.1.0"
