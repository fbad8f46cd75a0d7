"""Learnable components and the forward prediction path.

Three modeling blocks produce bounded "latent factor offsets":

* user side: attention-weighted aggregation of (item embedding, deviation
  embedding) encodings over the user's rated items;
* item side: the mirror aggregation over the item's raters;
* social side: offsets of the user's trusted neighbors, computed with the
  same user-side parameters.

A three-layer head maps a (user offset, item offset) pair to a signed
preference score, which is added to the statistical benchmark
``alpha/2 * (user average + item average)`` to form the predicted rating.
Ablation switches cover uniform social weights, no social term, raw-rating
(non-decentralized) encodings, and uniform/max attention.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .graph import LEVEL_COUNT

ATTENTION_MODES = ("softmax", "uniform_avg", "max")
VARIANT_NAMES = ("base", "rc", "sn", "rd")


@dataclass
class VariantFlags:
    """Ablation switches; defaults reproduce the full model."""

    rc_off: bool = False          # uniform social weights instead of coefficients
    sn_off: bool = False          # drop the social term entirely
    rd_raw: bool = False          # raw ratings instead of deviation levels
    attention_mode: str = "softmax"
    alpha: float = 1.0            # weight of the average-rating benchmark

    def __post_init__(self):
        if self.attention_mode not in ATTENTION_MODES:
            raise ValueError(
                f"attention_mode must be one of {ATTENTION_MODES}, got {self.attention_mode!r}"
            )
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")

    @classmethod
    def from_variant(cls, variant, attention_mode="softmax", alpha=1.0) -> "VariantFlags":
        if variant not in VARIANT_NAMES:
            raise ValueError(f"variant must be one of {VARIANT_NAMES}, got {variant!r}")
        return cls(
            rc_off=variant == "rc",
            sn_off=variant == "sn",
            rd_raw=variant == "rd",
            attention_mode=attention_mode,
            alpha=alpha,
        )

    def to_dict(self):
        return {
            "rc_off": self.rc_off,
            "sn_off": self.sn_off,
            "rd_raw": self.rd_raw,
            "attention_mode": self.attention_mode,
            "alpha": self.alpha,
        }


def _parameter_shapes(num_users, num_items, embed_dim):
    d = embed_dim
    return {
        "user_embed": (num_users, d),
        "item_embed": (num_items, d),
        "diff_embed": (LEVEL_COUNT, d),
        "enc_user_w1": (2 * d, d),
        "enc_user_b1": (d,),
        "enc_user_w2": (d, d),
        "enc_user_b2": (d,),
        "enc_item_w1": (2 * d, d),
        "enc_item_b1": (d,),
        "enc_item_w2": (d, d),
        "enc_item_b2": (d,),
        "att_user_w1": (2 * d, d),
        "att_user_b1": (d,),
        "att_user_w2": (d, 1),
        "att_user_b2": (1,),
        "att_item_w1": (2 * d, d),
        "att_item_b1": (d,),
        "att_item_w2": (d, 1),
        "att_item_b2": (1,),
        "agg_user_w": (d, d),
        "agg_user_b": (d,),
        "agg_item_w": (d, d),
        "agg_item_b": (d,),
        "head_w1": (2 * d, d),
        "head_b1": (d,),
        "head_w2": (d, d),
        "head_b2": (d,),
        "head_w_out": (d, 1),
    }


class ModelParams:
    """All learnable arrays, stored as named float64 tensors.

    One encoder/attention/aggregation set serves both the user modeling and
    the social modeling, and one deviation-embedding table serves both the
    user and the item view.
    """

    def __init__(self, tensors, num_users, num_items, embed_dim):
        self.tensors: dict[str, Tensor] = tensors
        self.num_users = num_users
        self.num_items = num_items
        self.embed_dim = embed_dim

    @classmethod
    def initialize(cls, num_users, num_items, embed_dim, seed=0) -> "ModelParams":
        """Draw every array from uniform(-1/sqrt(D), 1/sqrt(D))."""
        if embed_dim < 1:
            raise ValueError(f"embed_dim must be >= 1, got {embed_dim}")
        rng = np.random.default_rng(seed)
        bound = 1.0 / np.sqrt(embed_dim)
        tensors = {}
        for name, shape in _parameter_shapes(num_users, num_items, embed_dim).items():
            data = rng.uniform(-bound, bound, size=shape)
            tensors[name] = Tensor(data, requires_grad=True)
        return cls(tensors, num_users, num_items, embed_dim)

    @classmethod
    def from_arrays(cls, arrays, num_users, num_items, embed_dim) -> "ModelParams":
        expected = _parameter_shapes(num_users, num_items, embed_dim)
        if set(arrays) != set(expected):
            missing = set(expected) ^ set(arrays)
            raise ValueError(f"parameter names do not match, offending: {sorted(missing)}")
        tensors = {}
        for name, shape in expected.items():
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != shape:
                raise ValueError(f"{name}: expected shape {shape}, got {arr.shape}")
            tensors[name] = Tensor(arr, requires_grad=True)
        return cls(tensors, num_users, num_items, embed_dim)

    def __getitem__(self, name) -> Tensor:
        return self.tensors[name]

    def names(self):
        return list(self.tensors)

    def arrays(self):
        return {name: t.data.copy() for name, t in self.tensors.items()}

    def load_arrays(self, arrays):
        for name, t in self.tensors.items():
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != t.data.shape:
                raise ValueError(f"{name}: expected shape {t.data.shape}, got {arr.shape}")
            t.data = arr.copy()
            t.grad = None

    def copy(self) -> "ModelParams":
        return ModelParams.from_arrays(
            self.arrays(), self.num_users, self.num_items, self.embed_dim
        )

    def zero_grad(self):
        for t in self.tensors.values():
            t.grad = None

    def gradients(self):
        """Current gradient per parameter (zeros where nothing flowed)."""
        return {
            name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
            for name, t in self.tensors.items()
        }

    def check_finite(self):
        for name, t in self.tensors.items():
            if not np.all(np.isfinite(t.data)):
                raise FloatingPointError(f"parameter {name} contains non-finite values")


@dataclass
class NeighborhoodUsage:
    """Recorder for realized neighborhood sizes (node-dropout auditing)."""

    records: list = field(default_factory=list)

    def record(self, view, node, used):
        self.records.append((view, int(node), int(used)))


def _linear(x, params, prefix):
    return ad.add(ad.matmul(x, params[f"{prefix}_w1"]), params[f"{prefix}_b1"])


def _encode(pair_input, params, prefix):
    hidden = ad.relu(_linear(pair_input, params, prefix))
    return ad.add(ad.matmul(hidden, params[f"{prefix}_w2"]), params[f"{prefix}_b2"])


def _attention_scores(encoded_with_self, params, prefix):
    hidden = ad.relu(_linear(encoded_with_self, params, prefix))
    scores = ad.add(ad.matmul(hidden, params[f"{prefix}_w2"]), params[f"{prefix}_b2"])
    return ad.reshape(scores, scores.shape[:-1])


def apply_attention(scores, mask=None, mode="softmax") -> Tensor:
    """Turn raw attention scores into weights under the given mode.

    ``softmax`` normalizes within each row; ``uniform_avg`` assigns
    ``1/row_size`` to every live position; ``max`` assigns the row's largest
    softmax weight to every live position.
    """
    if mode not in ATTENTION_MODES:
        raise ValueError(f"unknown attention mode {mode!r}")
    scores = ad.as_tensor(scores)
    if mask is None:
        mask = np.ones(scores.shape, dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
    if mode == "uniform_avg":
        counts = mask.sum(axis=-1, keepdims=True)
        weights = mask / np.where(counts == 0, 1, counts)
        return Tensor(weights)
    softmax = ad.masked_softmax(scores, mask)
    if mode == "softmax":
        return softmax
    top = ad.reduce_max(softmax, axis=-1, keepdims=True)
    return ad.mul(ad.broadcast_to(top, softmax.shape), mask.astype(np.float64))


def _empty_neighborhood():
    empty = np.empty(0, dtype=np.int64)
    return empty, empty, empty


def _offset_batch(side, entities, neigh, params, flags, usage=None) -> Tensor:
    """Latent factor offsets for a batch of users or items.

    Ragged neighborhoods are zero-padded and masked; an empty neighborhood
    aggregates to the zero vector, so the offset degenerates to
    ``tanh(aggregation bias)``.
    """
    if side == "user":
        fetch = lambda e: neigh.items_of_user(e)
        nb_table, self_table = "item_embed", "user_embed"
        enc, att, agg, view = "enc_user", "att_user", "agg_user", "user_items"
    else:
        fetch = lambda e: neigh.users_of_item(e)
        nb_table, self_table = "user_embed", "item_embed"
        enc, att, agg, view = "enc_item", "att_item", "agg_item", "item_users"

    rows = [fetch(e) if e >= 0 else _empty_neighborhood() for e in entities]
    if usage is not None:
        for e, (nbrs, _, _) in zip(entities, rows):
            usage.record(view, e, len(nbrs))
    batch = len(entities)
    width = max(1, max((len(nbrs) for nbrs, _, _ in rows), default=0))
    neighbor_idx = np.zeros((batch, width), dtype=np.int64)
    level_idx = np.zeros((batch, width), dtype=np.int64)
    mask = np.zeros((batch, width), dtype=bool)
    for b, (nbrs, levels, ratings) in enumerate(rows):
        n = len(nbrs)
        if n == 0:
            continue
        neighbor_idx[b, :n] = nbrs
        level_idx[b, :n] = (ratings - 1) if flags.rd_raw else levels
        mask[b, :n] = True

    nb_embed = ad.take(params[nb_table], neighbor_idx)            # (B, W, D)
    lv_embed = ad.take(params["diff_embed"], level_idx)           # (B, W, D)
    encoded = _encode(ad.concat([nb_embed, lv_embed], axis=-1), params, enc)

    self_embed = ad.take(params[self_table], np.maximum(entities, 0))
    self_rep = ad.broadcast_to(
        ad.reshape(self_embed, (batch, 1, params.embed_dim)), encoded.shape
    )
    scores = _attention_scores(ad.concat([encoded, self_rep], axis=-1), params, att)
    weights = apply_attention(scores, mask, flags.attention_mode)

    weighted = ad.mul(ad.reshape(weights, (batch, width, 1)), encoded)
    aggregated = ad.tensor_sum(weighted, axis=1)                  # (B, D)
    return ad.tanh(ad.add(ad.matmul(aggregated, params[f"{agg}_w"]), params[f"{agg}_b"]))


def _preference_head(h_user, h_item, params) -> Tensor:
    z = ad.concat([h_user, h_item], axis=-1)
    z1 = ad.tanh(ad.add(ad.matmul(z, params["head_w1"]), params["head_b1"]))
    z2 = ad.tanh(ad.add(ad.matmul(z1, params["head_w2"]), params["head_b2"]))
    out = ad.matmul(z2, params["head_w_out"])
    return ad.reshape(out, out.shape[:-1])


def social_lambda(coefficients, rc_off=False) -> np.ndarray:
    """Normalized social weights over the realized neighbor set."""
    coeffs = np.asarray(coefficients, dtype=np.float64)
    if coeffs.size == 0:
        return coeffs
    if rc_off:
        return np.full(coeffs.shape, 1.0 / coeffs.size)
    return coeffs / coeffs.sum()


def _benchmark(users, items, bundle, alpha):
    gm = bundle.global_mean
    user_avg = np.where(users >= 0, bundle.user_avg[np.maximum(users, 0)], gm)
    item_avg = np.where(items >= 0, bundle.item_avg[np.maximum(items, 0)], gm)
    return (alpha * 0.5) * (user_avg + item_avg)


def forward_ratings(users, items, neigh, bundle, params, flags, usage=None) -> Tensor:
    """Predicted ratings for a batch of (user, item) pairs.

    ``neigh`` supplies realized neighborhoods: the full graph at evaluation
    time, or a per-epoch node-dropout sample during training. Negative
    indices denote cold entities with no interactions; their prediction
    falls back to the global-mean benchmark plus the degenerate offsets.
    """
    users = np.asarray(users, dtype=np.int64).reshape(-1)
    items = np.asarray(items, dtype=np.int64).reshape(-1)
    if users.shape != items.shape:
        raise ValueError("users and items must have equal length")
    batch = len(users)
    if batch == 0:
        return Tensor(np.zeros(0))

    if flags.sn_off:
        social_rows = [(np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64))] * batch
    else:
        social_rows = [
            neigh.social_of_user(u) if u >= 0 else
            (np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64))
            for u in users
        ]
        if usage is not None:
            for u, (nbrs, _) in zip(users, social_rows):
                usage.record("social", u, len(nbrs))

    all_users = np.concatenate([users] + [nbrs for nbrs, _ in social_rows])
    unique_users = np.unique(all_users)
    unique_items = np.unique(items)
    user_offsets = _offset_batch("user", unique_users, neigh, params, flags, usage)
    item_offsets = _offset_batch("item", unique_items, neigh, params, flags, usage)

    h_user = ad.take(user_offsets, np.searchsorted(unique_users, users))
    h_item = ad.take(item_offsets, np.searchsorted(unique_items, items))
    own_score = _preference_head(h_user, h_item, params)          # (B,)

    pair_index = []
    neighbor_pos = []
    lam_values = []
    for b, (nbrs, coeffs) in enumerate(social_rows):
        if len(nbrs) == 0:
            continue
        lam = social_lambda(coeffs, rc_off=flags.rc_off)
        pair_index.extend([b] * len(nbrs))
        neighbor_pos.extend(np.searchsorted(unique_users, nbrs).tolist())
        lam_values.extend(lam.tolist())

    has_social = np.zeros(batch, dtype=bool)
    if pair_index:
        pair_index = np.asarray(pair_index, dtype=np.int64)
        has_social[np.unique(pair_index)] = True
        h_social = ad.take(user_offsets, np.asarray(neighbor_pos, dtype=np.int64))
        h_item_rep = ad.take(h_item, pair_index)
        social_scores = _preference_head(h_social, h_item_rep, params)
        weighted = ad.mul(social_scores, np.asarray(lam_values))
        social_sum = ad.segment_sum(weighted, pair_index, batch)
        preference = ad.add(
            ad.mul(own_score, np.where(has_social, 0.5, 1.0)),
            ad.mul(social_sum, 0.5),
        )
    else:
        preference = own_score

    return ad.add(preference, Tensor(_benchmark(users, items, bundle, flags.alpha)))


def predict_batch(users, items, neigh, bundle, params, flags, chunk_size=2048) -> np.ndarray:
    """Evaluation-time predictions, computed in chunks without gradients."""
    users = np.asarray(users, dtype=np.int64).reshape(-1)
    items = np.asarray(items, dtype=np.int64).reshape(-1)
    out = np.empty(len(users), dtype=np.float64)
    for start in range(0, len(users), chunk_size):
        stop = start + chunk_size
        out[start:stop] = forward_ratings(
            users[start:stop], items[start:stop], neigh, bundle, params, flags
        ).data
    return out


def predict(user, item, neigh, bundle, params, flags) -> float:
    """Predicted rating for one (user, item) pair on full neighborhoods."""
    return float(
        forward_ratings([user], [item], neigh, bundle, params, flags).data[0]
    )


_SCORE_FLOOR = np.nextafter(0.0, 1.0)
_SCORE_CEIL = np.nextafter(1.0, 0.0)


def ranking_scores(ratings) -> np.ndarray:
    """Squash predicted ratings into the open interval (0, 1)."""
    squashed = ad._sigmoid_array(np.atleast_1d(np.asarray(ratings, dtype=np.float64)))
    return np.clip(squashed, _SCORE_FLOOR, _SCORE_CEIL)


def predict_ranking_score(user, item, neigh, bundle, params, flags) -> float:
    return float(ranking_scores(predict(user, item, neigh, bundle, params, flags))[0])


# single-pair views of the building blocks, mainly for inspection and tests
def encode_user_interaction(item, level, params) -> Tensor:
    pair = ad.concat(
        [ad.take(params["item_embed"], [item]), ad.take(params["diff_embed"], [level])],
        axis=-1,
    )
    return ad.reshape(_encode(pair, params, "enc_user"), (params.embed_dim,))


def encode_item_interaction(user, level, params) -> Tensor:
    pair = ad.concat(
        [ad.take(params["user_embed"], [user]), ad.take(params["diff_embed"], [level])],
        axis=-1,
    )
    return ad.reshape(_encode(pair, params, "enc_item"), (params.embed_dim,))


def attention_user(interactions, user_embed, params, mode="softmax") -> Tensor:
    """Attention weights over one user's encoded interactions (L, D)."""
    interactions = ad.as_tensor(interactions)
    count = interactions.shape[0]
    rep = ad.broadcast_to(
        ad.reshape(ad.as_tensor(user_embed), (1, params.embed_dim)), interactions.shape
    )
    scores = _attention_scores(ad.concat([interactions, rep], axis=-1), params, "att_user")
    return apply_attention(ad.reshape(scores, (1, count)), mode=mode)


def attention_item(interactions, item_embed, params, mode="softmax") -> Tensor:
    interactions = ad.as_tensor(interactions)
    count = interactions.shape[0]
    rep = ad.broadcast_to(
        ad.reshape(ad.as_tensor(item_embed), (1, params.embed_dim)), interactions.shape
    )
    scores = _attention_scores(ad.concat([interactions, rep], axis=-1), params, "att_item")
    return apply_attention(ad.reshape(scores, (1, count)), mode=mode)


def user_offset(user, neigh, params, flags=None, usage=None) -> Tensor:
    flags = flags or VariantFlags()
    out = _offset_batch("user", np.asarray([user]), neigh, params, flags, usage)
    return ad.reshape(out, (params.embed_dim,))


def item_offset(item, neigh, params, flags=None, usage=None) -> Tensor:
    flags = flags or VariantFlags()
    out = _offset_batch("item", np.asarray([item]), neigh, params, flags, usage)
    return ad.reshape(out, (params.embed_dim,))


def preference_rating(h_user, h_item, params) -> Tensor:
    """Signed preference score for a single offset pair."""
    h_user = ad.reshape(ad.as_tensor(h_user), (1, -1))
    h_item = ad.reshape(ad.as_tensor(h_item), (1, -1))
    return ad.reshape(_preference_head(h_user, h_item, params), ())
