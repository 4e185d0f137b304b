"""Discrete-event simulation of emergency department patient flow with imaging.

Typical use::

    from edflow import default_config, run_scenario
    result = run_scenario(default_config().with_replication(count=10))
"""

from .config import ParseError, RunConfig, ValidationError, default_config, emit_defaults, parse_config
from .model import EDModel
from .scenarios import (
    calibrate,
    compare,
    run_replication,
    run_scenario,
    sweep_bundling,
    sweep_delays,
)
from .stats import mean_ci, paired_t, t_quantile, welch_t

__all__ = [
    "EDModel",
    "ParseError",
    "RunConfig",
    "ValidationError",
    "calibrate",
    "compare",
    "default_config",
    "emit_defaults",
    "mean_ci",
    "paired_t",
    "parse_config",
    "run_replication",
    "run_scenario",
    "sweep_bundling",
    "sweep_delays",
    "t_quantile",
    "welch_t",
]
__version__ = "0.1.0"
