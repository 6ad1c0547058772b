"""Aspect-robust sentiment classification with consistency-regularized training."""

from .augment import AugmentConfig, PairedDataset, add_diff_mix, augment_dataset
from .benchmark import BenchmarkConfig, run_regime
from .corpus import Dataset, Instance, load_dataset
from .estimator import AddDiffMixAugmenter, CRRClassifier
from .objective import LossConfig, crr_loss, divergence
from .trainer import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "AddDiffMixAugmenter", "AugmentConfig", "BenchmarkConfig", "CRRClassifier", "Dataset", "Instance",
    "LossConfig", "PairedDataset", "TrainConfig", "add_diff_mix", "augment_dataset", "crr_loss", "divergence",
    "load_dataset", "run_regime", "train",
]
