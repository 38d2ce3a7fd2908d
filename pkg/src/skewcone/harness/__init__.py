"""Config-driven experiment runs, the default suite, sweeps and the CLI."""

from .config import ExperimentConfig, load_config, parse_config
from .report import CheckOutcome, RunReport
from .runner import DEFAULT_SUITE, bundled_config, bundled_names, run, run_suite, sweep

__all__ = [
    "CheckOutcome", "DEFAULT_SUITE", "ExperimentConfig", "RunReport", "bundled_config", "bundled_names",
    "load_config", "parse_config", "run", "run_suite", "sweep",
]
