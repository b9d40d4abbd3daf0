from .audit import run_audit
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .grid import empty_regions, export_decision_grid

__all__ = ["run_audit", "ConfigError", "ExperimentConfig", "load_config", "parse_config",
           "empty_regions", "export_decision_grid"]
