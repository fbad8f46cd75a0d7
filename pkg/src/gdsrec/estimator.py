"""Scikit-learn style estimator wrapping the full train/predict pipeline."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .datasets import DatasetBundle, IdMap
from .graph import build_graph
from .model import VariantFlags, predict_batch, ranking_scores
from .training import TrainConfig, fit_model
from .validation import (
    check_fraction,
    check_interaction_pairs,
    check_rating_values,
    check_seed,
    check_trust_edges,
)


class GDSRecommender(BaseEstimator, RegressorMixin):
    """Social recommender trained on explicit ratings and trust edges.

    The model decentralizes the rating graph (each interaction is encoded by
    its quantized deviation from the counterpart's mean rating), aggregates
    neighborhoods with attention, re-weights trusted neighbors by preference
    similarity, and predicts ``alpha/2 * (user mean + item mean)`` plus a
    learned preference offset.

    Parameters
    ----------
    embed_dim : int, default=32
        Size of every embedding and hidden layer.
    neighbor_cap : int, default=10
        Node-dropout limit: at most this many neighbors per node and epoch
        during training.
    delta : int, default=1
        Rating-difference threshold used for social tie strength.
    alpha : float, default=1.0
        Weight of the average-rating benchmark in the prediction.
    learning_rate : float, default=5e-4
    batch_size : int, default=128
    max_epochs : int, default=50
    patience : int, default=10
        Stop when validation MAE+RMSE rises this many successive epochs.
    task : {"rating", "ranking"}, default="rating"
        Objective: squared error on ratings, or binary cross-entropy on
        thresholded relevance labels.
    positive_threshold : {3, 4}, default=4
        Minimum rating counted as relevant for the ranking task.
    variant : {"base", "rc", "sn", "rd"}, default="base"
        Ablation switch: uniform social weights, no social term, or raw
        ratings instead of deviations.
    attention : {"softmax", "uniform_avg", "max"}, default="softmax"
    validation_fraction : float, default=0.1
        Share of the training data held out for early stopping.
    clip_predictions : bool, default=False
        Clamp reported predictions to the 1..5 rating scale.
    random_state : int, default=0
    verbose : int, default=0

    Attributes
    ----------
    params_ : ModelParams
        Learned arrays of the best epoch.
    graph_ : DecentralizedGraph
    bundle_ : DatasetBundle
    history_ : list of per-epoch metrics.
    n_users_, n_items_ : int

    Examples
    --------
    >>> X = [["u1", "i1"], ["u1", "i2"], ["u2", "i1"], ["u2", "i2"]]
    >>> y = [4, 3, 5, 2]
    >>> rec = GDSRecommender(embed_dim=8, max_epochs=2).fit(X, y)
    >>> rec.predict([["u1", "i2"]]).shape
    (1,)
    """

    def __init__(self, embed_dim=32, neighbor_cap=10, delta=1, alpha=1.0,
                 learning_rate=5e-4, batch_size=128, max_epochs=50, patience=10,
                 task="rating", positive_threshold=4, variant="base",
                 attention="softmax", validation_fraction=0.1,
                 clip_predictions=False, random_state=0, verbose=0):
        self.embed_dim = embed_dim
        self.neighbor_cap = neighbor_cap
        self.delta = delta
        self.alpha = alpha
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.task = task
        self.positive_threshold = positive_threshold
        self.variant = variant
        self.attention = attention
        self.validation_fraction = validation_fraction
        self.clip_predictions = clip_predictions
        self.random_state = random_state
        self.verbose = verbose

    def _attention_mode(self):
        return {"avg": "uniform_avg"}.get(self.attention, self.attention)

    def fit(self, X, y, trust=None):
        """Fit on (user, item) pairs with integer ratings 1..5.

        Parameters
        ----------
        X : array-like of shape (n_samples, 2)
            User and item identifiers (any tokens).
        y : array-like of shape (n_samples,)
            Integer ratings in [1, 5].
        trust : array-like of shape (n_edges, 2), optional
            Directed (src_user, dst_user) social edges.
        """
        X = check_interaction_pairs(X)
        y = check_rating_values(y, len(X))
        trust = check_trust_edges(trust)
        seed = check_seed(self.random_state)
        val_fraction = check_fraction("validation_fraction", self.validation_fraction)

        id_map = IdMap()
        triples = np.empty((len(X), 3), dtype=np.int64)
        seen = set()
        for row, ((user, item), rating) in enumerate(zip(X, y)):
            u = id_map.add_user(str(user))
            v = id_map.add_item(str(item))
            if (u, v) in seen:
                raise ValueError(f"duplicate rating for pair ({user!r}, {item!r})")
            seen.add((u, v))
            triples[row] = (u, v, rating)
        trust_internal = []
        for src, dst in trust:
            if str(src) == str(dst):
                continue
            trust_internal.append(
                (id_map.add_user(str(src)), id_map.add_user(str(dst)))
            )

        rng = np.random.default_rng(seed)
        perm = rng.permutation(len(triples))
        n_val = int(round(len(triples) * val_fraction))
        if len(triples) - n_val < 1:
            raise ValueError("validation_fraction leaves no training data")
        bundle = DatasetBundle(
            train=triples[perm[n_val:]],
            validation=triples[perm[:n_val]],
            test=np.empty((0, 3), dtype=np.int64),
            trust=np.asarray(trust_internal, dtype=np.int64).reshape(-1, 2),
            num_users=id_map.num_users,
            num_items=id_map.num_items,
            id_map=id_map,
            seed=seed,
        )
        config = TrainConfig(
            embed_dim=self.embed_dim,
            neighbor_cap=self.neighbor_cap,
            delta=self.delta,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            patience=self.patience,
            task=self.task,
            positive_threshold=self.positive_threshold,
            alpha=self.alpha,
            seed=seed,
        )
        flags = VariantFlags.from_variant(
            self.variant, attention_mode=self._attention_mode(), alpha=self.alpha
        )
        graph = build_graph(bundle, delta=self.delta)

        callback = None
        if self.verbose:
            callback = lambda m, _p: print(
                f"epoch {m.epoch}: train_loss={m.train_loss:.6f} "
                f"val_mae={m.val_mae:.6f} val_rmse={m.val_rmse:.6f}"
            )
        result = fit_model(bundle, graph, config, flags, callback=callback)

        self.bundle_ = bundle
        self.graph_ = graph
        self.params_ = result.params
        self.flags_ = flags
        self.history_ = result.history
        self.best_epoch_ = result.best_epoch
        self.stopped_early_ = result.stopped_early
        self.n_users_ = bundle.num_users
        self.n_items_ = bundle.num_items
        return self

    def _map_pairs(self, X):
        X = check_interaction_pairs(X)
        id_map = self.bundle_.id_map
        users = np.empty(len(X), dtype=np.int64)
        items = np.empty(len(X), dtype=np.int64)
        for row, (user, item) in enumerate(X):
            user, item = str(user), str(item)
            users[row] = id_map.user_index(user) if id_map.has_user(user) else -1
            items[row] = id_map.item_index(item) if id_map.has_item(item) else -1
        return users, items

    def predict(self, X) -> np.ndarray:
        """Predicted ratings; unknown users/items get the cold-start path."""
        check_is_fitted(self, "params_")
        users, items = self._map_pairs(X)
        predicted = predict_batch(
            users, items, self.graph_, self.bundle_, self.params_, self.flags_
        )
        if self.clip_predictions:
            predicted = np.clip(predicted, 1.0, 5.0)
        return predicted

    def predict_score(self, X) -> np.ndarray:
        """Ranking scores in (0, 1): sigmoid of the predicted rating."""
        check_is_fitted(self, "params_")
        users, items = self._map_pairs(X)
        predicted = predict_batch(
            users, items, self.graph_, self.bundle_, self.params_, self.flags_
        )
        return ranking_scores(predicted)
