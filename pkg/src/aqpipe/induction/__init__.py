"""Dataset construction, C4.5-style tree induction and evaluation."""

from .dataset import Dataset
from .features import (
    build_alarm_dataset,
    build_estimation_dataset,
    build_validation_dataset,
    validation_dataset_from_records,
    validation_features,
)
from .tree import (
    DecisionTree,
    Evaluation,
    InductionError,
    Leaf,
    SchemaError,
    Split,
    SplitCandidate,
    best_split,
    entropy,
    evaluate,
    gain_ratio,
    grow_tree,
    predict,
    prune,
)

__all__ = [
    "Dataset", "DecisionTree", "Evaluation", "InductionError", "Leaf", "SchemaError",
    "Split", "SplitCandidate", "best_split", "build_alarm_dataset", "build_estimation_dataset",
    "build_validation_dataset", "entropy", "evaluate", "gain_ratio", "grow_tree", "predict",
    "prune", "validation_dataset_from_records", "validation_features",
]
