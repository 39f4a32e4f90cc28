"""Change-level (36) and pair-level (82) feature extraction."""

from .catalog import (
    BOOLEAN_FEATURES,
    CHANGE_FEATURES,
    DIMENSIONS,
    PAIR_FEATURES,
    PAIR_VECTOR_FEATURES,
    dimension_of,
    features_in_dimension,
    is_boolean,
)
from .embedding import EmbeddingModel, cosine, train_embedding, training_texts
from .export import read_feature_csv, write_feature_csv, write_manifest
from .history import Timeline, change_feature_matrix, compute_change_features
from .pairs import PairFeaturizer, compute_pair_features
from .purpose import classify_change_purpose

__all__ = [
    "BOOLEAN_FEATURES",
    "CHANGE_FEATURES",
    "DIMENSIONS",
    "PAIR_FEATURES",
    "PAIR_VECTOR_FEATURES",
    "EmbeddingModel",
    "PairFeaturizer",
    "Timeline",
    "change_feature_matrix",
    "classify_change_purpose",
    "compute_change_features",
    "compute_pair_features",
    "cosine",
    "dimension_of",
    "features_in_dimension",
    "is_boolean",
    "read_feature_csv",
    "train_embedding",
    "training_texts",
    "write_feature_csv",
    "write_manifest",
]
