"""Affinity scorers, training-signal construction and the linear triplet trainer."""

from .features import ME_FEATURES, MM_FEATURES, FeatureExtractor
from .linear import LinearAffinityModel, LinearScorer, batch_loss_and_grad, triplet_loss
from .scorers import LexicalScorer, PrecomputedScorer, Scorer, load_precomputed_scores, write_scores
from .training import (
    EpochStats,
    TrainingConfig,
    TrainingCorpus,
    gold_clusters,
    hard_negatives_me,
    hard_negatives_mm,
    mst_positive_pairs,
    train,
    train_epoch,
)

__all__ = [
    "EpochStats",
    "FeatureExtractor",
    "LexicalScorer",
    "LinearAffinityModel",
    "LinearScorer",
    "ME_FEATURES",
    "MM_FEATURES",
    "PrecomputedScorer",
    "Scorer",
    "TrainingConfig",
    "TrainingCorpus",
    "batch_loss_and_grad",
    "gold_clusters",
    "hard_negatives_me",
    "hard_negatives_mm",
    "load_precomputed_scores",
    "mst_positive_pairs",
    "train",
    "train_epoch",
    "triplet_loss",
    "write_scores",
]
