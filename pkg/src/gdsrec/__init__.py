"""Graph-based decentralized collaborative filtering for social recommendation."""

from .datasets import (
    DatasetBundle,
    IdMap,
    RatingRecord,
    TrustEdge,
    load_dataset,
    load_ratings,
    load_trust,
    split_dataset,
)
from .estimator import GDSRecommender
from .graph import (
    DecentralizedGraph,
    build_graph,
    item_level,
    relation_coefficient,
    sample_neighbors,
    social_weights,
    user_level,
)
from .metrics import EvalReport, evaluate_model, mae_rmse, recall_ndcg
from .model import ModelParams, VariantFlags, predict, predict_ranking_score
from .training import TrainConfig, fit_model

__version__ = "0.1.0"

__all__ = [
    "DatasetBundle",
    "DecentralizedGraph",
    "EvalReport",
    "GDSRecommender",
    "IdMap",
    "ModelParams",
    "RatingRecord",
    "TrainConfig",
    "TrustEdge",
    "VariantFlags",
    "build_graph",
    "evaluate_model",
    "fit_model",
    "item_level",
    "load_dataset",
    "load_ratings",
    "load_trust",
    "mae_rmse",
    "predict",
    "predict_ranking_score",
    "recall_ndcg",
    "relation_coefficient",
    "sample_neighbors",
    "social_weights",
    "split_dataset",
    "user_level",
]
