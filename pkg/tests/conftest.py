import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gdsrec.datasets import DatasetBundle, RatingRecord, TrustEdge, split_dataset
from gdsrec.graph import build_graph
from gdsrec.model import ModelParams, VariantFlags


def make_records(rng, num_users, num_items, n_ratings):
    records, seen = [], set()
    while len(records) < n_ratings:
        u = int(rng.integers(0, num_users))
        v = int(rng.integers(0, num_items))
        if (u, v) in seen:
            continue
        seen.add((u, v))
        records.append(RatingRecord(u, v, int(rng.integers(1, 6))))
    return records


def make_trust(rng, num_users, n_edges):
    edges, seen = [], set()
    while len(edges) < n_edges:
        i = int(rng.integers(0, num_users))
        j = int(rng.integers(0, num_users))
        if i == j or (i, j) in seen:
            continue
        seen.add((i, j))
        edges.append(TrustEdge(i, j))
    return edges


def make_bundle(seed=0, num_users=6, num_items=9, n_ratings=30, n_trust=8,
                train_fraction=0.7) -> DatasetBundle:
    rng = np.random.default_rng(seed)
    records = make_records(rng, num_users, num_items, n_ratings)
    trust = make_trust(rng, num_users, n_trust)
    return split_dataset(records, train_fraction, seed=seed, trust=trust,
                         num_users=num_users, num_items=num_items)


@pytest.fixture
def small_bundle():
    return make_bundle()


@pytest.fixture
def small_graph(small_bundle):
    return build_graph(small_bundle, delta=1)


@pytest.fixture
def small_params(small_bundle):
    return ModelParams.initialize(
        small_bundle.num_users, small_bundle.num_items, embed_dim=6, seed=11
    )


@pytest.fixture
def default_flags():
    return VariantFlags()


def zero_head(params):
    """In-place: zero the prediction head so every preference score is 0."""
    for name in ("head_w1", "head_b1", "head_w2", "head_b2", "head_w_out"):
        params[name].data = np.zeros_like(params[name].data)
    return params
