"""Decentralized interaction graph and weighted social graph construction.

Each train rating edge is annotated with a quantized deviation level,
``ceil(|rating - counterpart average|)``, which lands in {0..4} for 1..5
ratings. Social edges carry a relationship coefficient: one plus the number
of co-rated items on which the two users' ratings differ by at most
``delta``, normalized per user into weights that sum to one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LEVEL_COUNT = 5  # quantized deviation levels 0..4

_STREAM_USER_VIEW = 1
_STREAM_ITEM_VIEW = 2
_STREAM_SOCIAL_VIEW = 3


def user_level(rating, item_avg) -> int:
    """Quantized deviation of a rating from the item's average."""
    return math.ceil(abs(rating - item_avg))


def item_level(rating, user_avg) -> int:
    """Quantized deviation of a rating from the user's average."""
    return math.ceil(abs(rating - user_avg))


def relation_coefficient(u_i, u_j, bundle, delta) -> int:
    """Strength of the social tie from co-rated train items.

    One plus the number of items rated by both users whose ratings differ
    by at most ``delta``. Users without common items get the floor value 1.
    """
    ri = bundle.user_rating_map[u_i]
    rj = bundle.user_rating_map[u_j]
    if len(rj) < len(ri):
        ri, rj = rj, ri
    agreeing = sum(
        1 for item, r in ri.items() if item in rj and abs(r - rj[item]) <= delta
    )
    return 1 + agreeing


def social_weights(coefficients) -> np.ndarray:
    """Normalize relationship coefficients into weights summing to one."""
    coeffs = np.asarray(coefficients, dtype=np.float64)
    if coeffs.size == 0:
        return coeffs
    return coeffs / coeffs.sum()


@dataclass
class NeighborSample:
    """Up-to-``cap`` neighbors kept for one node during one epoch."""

    node: int
    kept: np.ndarray
    seed: object

    def __len__(self):
        return len(self.kept)


def sample_neighbors(node, neighbors, cap, seed) -> NeighborSample:
    """Reserve at most ``cap`` neighbors, uniformly without replacement.

    Nodes with degree <= cap keep their full neighbor list unchanged, so
    sparsely connected nodes are never truncated. Deterministic in ``seed``.
    """
    if cap < 1:
        raise ValueError(f"cap must be >= 1, got {cap}")
    neighbors = np.asarray(neighbors)
    if len(neighbors) <= cap:
        return NeighborSample(node=node, kept=neighbors.copy(), seed=seed)
    rng = np.random.default_rng(seed)
    positions = np.sort(rng.choice(len(neighbors), size=cap, replace=False))
    return NeighborSample(node=node, kept=neighbors[positions], seed=seed)


def _sample_positions(n, cap, seed):
    if n <= cap:
        return None  # keep everything
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n, size=cap, replace=False))


class DecentralizedGraph:
    """Per-node adjacency for the user, item and social views.

    ``user_items[i]`` / ``user_levels[i]`` / ``user_ratings[i]`` are aligned
    arrays over the train items of user ``i`` (mirrored for items). The
    social view stores, per user, the neighbor indices with their
    relationship coefficients and normalized weights.
    """

    def __init__(self, bundle, delta):
        self.delta = int(delta)
        self.num_users = bundle.num_users
        self.num_items = bundle.num_items
        self.user_items = bundle.user_items
        self.user_ratings = bundle.user_train_ratings
        self.user_levels = [
            np.asarray(
                [user_level(r, bundle.item_avg[v]) for v, r in zip(items, ratings)],
                dtype=np.int64,
            )
            for items, ratings in zip(bundle.user_items, bundle.user_train_ratings)
        ]
        self.item_users = bundle.item_users
        self.item_ratings = bundle.item_train_ratings
        self.item_levels = [
            np.asarray(
                [item_level(r, bundle.user_avg[u]) for u, r in zip(users, ratings)],
                dtype=np.int64,
            )
            for users, ratings in zip(bundle.item_users, bundle.item_train_ratings)
        ]
        self.social_neighbors = bundle.social_neighbors
        self.social_coefficients = [
            np.asarray(
                [relation_coefficient(u, k, bundle, self.delta) for k in neigh],
                dtype=np.int64,
            )
            for u, neigh in enumerate(bundle.social_neighbors)
        ]
        self.social_lambda = [social_weights(t) for t in self.social_coefficients]
        self._validate_levels()

    def _validate_levels(self):
        for levels in self.user_levels + self.item_levels:
            if len(levels) and (levels.min() < 0 or levels.max() >= LEVEL_COUNT):
                raise ValueError("deviation level outside 0..4; ratings out of range?")

    # realized-neighborhood interface shared with EpochSample
    def items_of_user(self, user):
        return self.user_items[user], self.user_levels[user], self.user_ratings[user]

    def users_of_item(self, item):
        return self.item_users[item], self.item_levels[item], self.item_ratings[item]

    def social_of_user(self, user):
        return self.social_neighbors[user], self.social_coefficients[user]

    def social_weights(self, user) -> np.ndarray:
        return self.social_lambda[user]


def build_graph(bundle, delta=1) -> DecentralizedGraph:
    """Build the decentralized graph from a bundle's train split."""
    if delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    return DecentralizedGraph(bundle, delta)


class EpochSample:
    """Node-dropout view of a graph: every neighborhood capped at ``cap``.

    Rebuilt each epoch with a seed derived from (seed, epoch, view, node) so
    training runs are reproducible. Social weights are renormalized over the
    kept neighbors.
    """

    def __init__(self, graph, cap, seed, epoch):
        if cap < 1:
            raise ValueError(f"cap must be >= 1, got {cap}")
        self.graph = graph
        self.cap = int(cap)
        self.seed = seed
        self.epoch = int(epoch)
        self._user = {}
        self._item = {}
        self._social = {}
        for u in range(graph.num_users):
            items, levels, ratings = graph.items_of_user(u)
            pos = _sample_positions(len(items), cap, [seed, epoch, _STREAM_USER_VIEW, u])
            if pos is not None:
                self._user[u] = (items[pos], levels[pos], ratings[pos])
            neigh, coeff = graph.social_of_user(u)
            pos = _sample_positions(len(neigh), cap, [seed, epoch, _STREAM_SOCIAL_VIEW, u])
            if pos is not None:
                self._social[u] = (neigh[pos], coeff[pos])
        for v in range(graph.num_items):
            users, levels, ratings = graph.users_of_item(v)
            pos = _sample_positions(len(users), cap, [seed, epoch, _STREAM_ITEM_VIEW, v])
            if pos is not None:
                self._item[v] = (users[pos], levels[pos], ratings[pos])

    def items_of_user(self, user):
        got = self._user.get(user)
        return got if got is not None else self.graph.items_of_user(user)

    def users_of_item(self, item):
        got = self._item.get(item)
        return got if got is not None else self.graph.users_of_item(item)

    def social_of_user(self, user):
        got = self._social.get(user)
        return got if got is not None else self.graph.social_of_user(user)


def sample_epoch(graph, cap, seed, epoch) -> EpochSample:
    """Resample all neighborhoods for one training epoch."""
    return EpochSample(graph, cap, seed, epoch)
