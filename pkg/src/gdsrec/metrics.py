"""Rating metrics (MAE, RMSE) and ranking metrics (Recall@5, NDCG).

Ranking follows the observed-data protocol: each user's test items are
ranked by predicted score (no full-catalog ranking), positives are items
rated at or above the threshold, and per-user metrics are macro-averaged
over users with at least one positive. NDCG uses gain ``2^label - 1`` and
discount ``log2(position + 1)`` over the full observed list; Recall counts
positives in the top five positions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

RECALL_CUTOFF = 5


def mae_rmse(predictions, truths):
    """Mean absolute error and root mean squared error."""
    predictions = np.asarray(predictions, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.float64)
    if predictions.shape != truths.shape:
        raise ValueError("predictions and truths must have equal shape")
    if predictions.size == 0:
        raise ValueError("cannot compute metrics on an empty test set")
    errors = predictions - truths
    mae = float(np.abs(errors).mean())
    rmse = float(np.sqrt((errors * errors).mean()))
    return mae, rmse


def label_items(ratings, positive_threshold) -> np.ndarray:
    """Binary relevance labels: 1 when the rating reaches the threshold."""
    return (np.asarray(ratings) >= positive_threshold).astype(np.int64)


def rank_user(item_ids, scores) -> np.ndarray:
    """Indices ordering one user's items by descending score.

    Ties are broken by ascending item id, so rankings are deterministic.
    """
    item_ids = np.asarray(item_ids)
    scores = np.asarray(scores, dtype=np.float64)
    return np.lexsort((item_ids, -scores))


def _dcg(labels) -> float:
    gains = np.power(2.0, labels) - 1.0
    discounts = np.log2(np.arange(2, len(labels) + 2))
    return float((gains / discounts).sum())


def ndcg_of_ranking(labels) -> float:
    """NDCG of one ranked label list; 0 when there are no positives."""
    labels = np.asarray(labels, dtype=np.float64)
    ideal = _dcg(np.sort(labels)[::-1])
    if ideal == 0.0:
        return 0.0
    return _dcg(labels) / ideal


def recall_ndcg(ranked_label_lists):
    """Macro-averaged Recall@5 and NDCG over per-user ranked label lists.

    Users without positives cannot be scored; they are excluded from the
    averages and reported in the returned counts.

    Returns
    -------
    (recall, ndcg, n_scored, n_without_positives)
    """
    recalls, ndcgs = [], []
    skipped = 0
    for labels in ranked_label_lists:
        labels = np.asarray(labels, dtype=np.int64)
        positives = int(labels.sum())
        if positives == 0:
            skipped += 1
            continue
        recalls.append(labels[:RECALL_CUTOFF].sum() / positives)
        ndcgs.append(ndcg_of_ranking(labels))
    if not recalls:
        return float("nan"), float("nan"), 0, skipped
    return float(np.mean(recalls)), float(np.mean(ndcgs)), len(recalls), skipped


@dataclass
class EvalReport:
    """Metrics of one evaluation run plus the conventions that produced them."""

    mae: float
    rmse: float
    recall_at_5: float
    ndcg: float
    n_test: int
    n_ranked_users: int
    n_users_without_positives: int
    positive_threshold: int
    split: str
    conventions: dict = field(default_factory=lambda: {
        "ndcg_gain": "2^label - 1",
        "ndcg_discount": "log2(position + 1)",
        "ndcg_cutoff": "full observed list",
        "recall_cutoff": RECALL_CUTOFF,
        "averaging": "macro over users with >= 1 positive",
    })
    per_user_rankings: dict | None = None

    def to_dict(self):
        out = {
            "mae": self.mae,
            "rmse": self.rmse,
            "recall_at_5": self.recall_at_5,
            "ndcg": self.ndcg,
            "n_test": self.n_test,
            "n_ranked_users": self.n_ranked_users,
            "n_users_without_positives": self.n_users_without_positives,
            "positive_threshold": self.positive_threshold,
            "split": self.split,
            "conventions": dict(self.conventions),
        }
        return out

    def summary(self) -> str:
        lines = [
            f"split            {self.split}",
            f"test ratings     {self.n_test}",
            f"MAE              {self.mae:.6f}",
            f"RMSE             {self.rmse:.6f}",
            f"Recall@5         {self.recall_at_5:.6f}",
            f"NDCG             {self.ndcg:.6f}",
            f"ranked users     {self.n_ranked_users}"
            f" (+{self.n_users_without_positives} without positives)",
        ]
        return "\n".join(lines)


def evaluate_predictions(pairs, truths, predictions, positive_threshold=4,
                         split="test", keep_lists=False) -> EvalReport:
    """Build a full report from precomputed predictions.

    ``pairs`` is an (n, 2) array of (user, item); ranking metrics group the
    test pairs per user and rank each user's observed items by the
    sigmoid-squashed prediction.
    """
    from .model import ranking_scores

    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    truths = np.asarray(truths, dtype=np.int64).reshape(-1)
    predictions = np.asarray(predictions, dtype=np.float64).reshape(-1)
    mae, rmse = mae_rmse(predictions, truths)

    scores = ranking_scores(predictions)
    labels = label_items(truths, positive_threshold)
    ranked_lists = []
    kept = {} if keep_lists else None
    for user in np.unique(pairs[:, 0]):
        rows = np.nonzero(pairs[:, 0] == user)[0]
        order = rank_user(pairs[rows, 1], scores[rows])
        ranked = labels[rows][order]
        ranked_lists.append(ranked)
        if keep_lists:
            kept[int(user)] = pairs[rows, 1][order].tolist()
    recall, ndcg, n_ranked, n_skipped = recall_ndcg(ranked_lists)
    return EvalReport(
        mae=mae,
        rmse=rmse,
        recall_at_5=recall,
        ndcg=ndcg,
        n_test=len(truths),
        n_ranked_users=n_ranked,
        n_users_without_positives=n_skipped,
        positive_threshold=positive_threshold,
        split=split,
        per_user_rankings=kept,
    )


def evaluate_model(params, graph, bundle, flags, split="test",
                   positive_threshold=4, keep_lists=False) -> EvalReport:
    """Predict a held-out split with full neighborhoods and score it."""
    from .model import predict_batch

    data = bundle.split(split)
    if len(data) == 0:
        raise ValueError(f"split {split!r} is empty")
    predictions = predict_batch(data[:, 0], data[:, 1], graph, bundle, params, flags)
    return evaluate_predictions(
        data[:, :2], data[:, 2], predictions,
        positive_threshold=positive_threshold, split=split, keep_lists=keep_lists,
    )
