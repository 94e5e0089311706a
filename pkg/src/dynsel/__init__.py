"""Dynamic classifier and ensemble selection for imbalanced credit scoring."""
from .dstech import TECHNIQUES, DsConfig, classify, classify_batch, fit_state
from .harness import ExperimentConfig, EvaluationReport, emit_report, run_experiment
from .metrics import evaluate

__version__ = "0.1.0"

__all__ = ["TECHNIQUES", "DsConfig", "classify", "classify_batch", "fit_state",
           "ExperimentConfig", "EvaluationReport", "emit_report", "run_experiment",
           "evaluate", "__version__"]
