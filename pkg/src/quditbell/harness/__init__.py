"""Config-driven experiment sweeps, decay fitting, reporting and the CLI."""

from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .experiments import SweepResult, run, run_cells
from .fitting import DecayFit, DecayFitError, fit_decay
from .report import ResultIntegrityError, compare, load_result, report
from .tables import TABLES, UnknownTableError, get_table

__all__ = [
    "ConfigError",
    "DecayFit",
    "DecayFitError",
    "ExperimentConfig",
    "ResultIntegrityError",
    "SweepResult",
    "TABLES",
    "UnknownTableError",
    "compare",
    "fit_decay",
    "get_table",
    "load_config",
    "load_result",
    "parse_config",
    "report",
    "run",
    "run_cells",
]
