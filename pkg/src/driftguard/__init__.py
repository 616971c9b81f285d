"""Unsupervised domain adaptation for one-class anomaly detection.

Trains a projection network on normal source embeddings with a
hypersphere-compactness objective while contrastively aligning them with
the dominant cluster mined from an unlabeled, contaminated target set;
anomalies are scored by distance to the hypersphere center.
"""
from .data import (
    AffineShift,
    EmbeddingDataset,
    PairedTargetSet,
    SyntheticShiftSpec,
    contaminate_target,
    default_benchmark_spec,
    generate_synthetic_pair,
    load_dataset,
    save_dataset,
)
from .trainer import TrainedDetector, TrainingConfig, classify, score, train
from .evaluation import MetricsReport, auc, cluster_accuracy, run_experiment

__version__ = "0.1.0"

__all__ = [
    "AffineShift",
    "EmbeddingDataset",
    "PairedTargetSet",
    "SyntheticShiftSpec",
    "TrainedDetector",
    "TrainingConfig",
    "MetricsReport",
    "auc",
    "classify",
    "cluster_accuracy",
    "contaminate_target",
    "default_benchmark_spec",
    "generate_synthetic_pair",
    "load_dataset",
    "run_experiment",
    "save_dataset",
    "score",
    "train",
]
