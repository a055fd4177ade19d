from .config import ConfigError, ConfigIssue, ExperimentConfig, parse_config
from .main import main
from .report import ReportError, report
from .runner import RunResult, run

__all__ = ["ConfigError", "ConfigIssue", "ExperimentConfig", "ReportError", "RunResult",
           "main", "parse_config", "report", "run"]
