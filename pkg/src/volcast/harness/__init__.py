from .config import ExperimentConfig, derive_seed
from .experiment import EvaluationReport, run_experiment, select_holdouts
from .report import emit_report

__all__ = ["ExperimentConfig", "derive_seed", "EvaluationReport", "run_experiment", "select_holdouts",
           "emit_report"]
