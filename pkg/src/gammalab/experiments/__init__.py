from .config import EXPERIMENTS, ExperimentConfig, validate
from .report import ConvergenceReport, Row, emit, fit_rate, read_csv, to_csv_text, to_json_text
from .runner import THEOREM_TAGS, run

__all__ = [
    "EXPERIMENTS", "ExperimentConfig", "validate", "ConvergenceReport", "Row", "emit", "fit_rate",
    "read_csv", "to_csv_text", "to_json_text", "THEOREM_TAGS", "run",
]
