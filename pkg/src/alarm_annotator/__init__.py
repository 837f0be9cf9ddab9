"""Alarm annotation on vitals streams: ingest, replay training, evaluation.

The package turns line-JSON monitor streams into labeled event datasets, trains
value-based and actor-critic annotators (plus supervised baselines) by replaying
those events, and scores checkpoints with rank and agreement metrics. Everything
randomized is seeded; reruns are byte-identical.
"""

from .env import (
    ACTION_ALARM,
    ACTION_NON_ALARM,
    AnnotationEnv,
    Normalizer,
    SimpleMatchReward,
    VitalThresholds,
    VitalsBandReward,
    normalcy_score,
)
from .evaluation import EvalReport, evaluate, top_k_reports
from .ingest import (
    BinaryLabel,
    Dataset,
    SeverityClass,
    VitalsSample,
    load_dataset_csv,
    save_dataset_csv,
)
from .sampling import SamplingStrategy, apply_downsampling
from .synthgen import SynthConfig, generate

__version__ = "0.1.0"

__all__ = [
    "ACTION_ALARM",
    "ACTION_NON_ALARM",
    "AnnotationEnv",
    "BinaryLabel",
    "Dataset",
    "EvalReport",
    "Normalizer",
    "SamplingStrategy",
    "SeverityClass",
    "SimpleMatchReward",
    "SynthConfig",
    "VitalThresholds",
    "VitalsBandReward",
    "VitalsSample",
    "apply_downsampling",
    "evaluate",
    "generate",
    "load_dataset_csv",
    "normalcy_score",
    "save_dataset_csv",
    "top_k_reports",
    "__version__",
]
