"""Unified OFDM + chirp-multicarrier symbiotic-radio link simulator."""

from .params import ComplexBlock, SystemConfig, validate_config, load_config, save_config
from .simharness import default_config, run_point, run_sweep, SweepSpec

__all__ = [
    "ComplexBlock",
    "SystemConfig",
    "validate_config",
    "load_config",
    "save_config",
    "default_config",
    "run_point",
    "run_sweep",
    "SweepSpec",
]

__version__ = "0.1.0"
