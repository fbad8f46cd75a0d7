"""Loading of rating/trust files, index mapping, splitting and train statistics.

Input files are plain delimited text (comma or tab, auto-detected):

* ratings: one ``<user><sep><item><sep><rating>`` record per line, integer
  rating on the 1..5 scale;
* trust:   one directed ``<src><sep><dst>`` edge per line.

External identifiers are arbitrary tokens; they are remapped to dense
internal indices ``0..num_users-1`` / ``0..num_items-1`` and the mapping is
kept for reporting.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

RATING_MIN = 1
RATING_MAX = 5


class DataError(ValueError):
    """Base error for ingestion and validation problems."""


class ParseError(DataError):
    """A line of an input file could not be parsed."""

    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


class ValidationError(DataError):
    """Parsed data violates a domain constraint."""


@dataclass(frozen=True)
class RatingRecord:
    """One observed interaction, with internal user/item indices."""

    user: int
    item: int
    rating: int


@dataclass(frozen=True)
class TrustEdge:
    """One directed social relation between internal user indices."""

    src: int
    dst: int


class IdMap:
    """Bijection between external identifiers and dense internal indices."""

    def __init__(self):
        self.users: list[str] = []
        self.items: list[str] = []
        self._user_index: dict[str, int] = {}
        self._item_index: dict[str, int] = {}

    @property
    def num_users(self):
        return len(self.users)

    @property
    def num_items(self):
        return len(self.items)

    def add_user(self, external: str) -> int:
        idx = self._user_index.get(external)
        if idx is None:
            idx = len(self.users)
            self._user_index[external] = idx
            self.users.append(external)
        return idx

    def add_item(self, external: str) -> int:
        idx = self._item_index.get(external)
        if idx is None:
            idx = len(self.items)
            self._item_index[external] = idx
            self.items.append(external)
        return idx

    def user_index(self, external: str) -> int:
        return self._user_index[external]

    def item_index(self, external: str) -> int:
        return self._item_index[external]

    def has_user(self, external: str) -> bool:
        return external in self._user_index

    def has_item(self, external: str) -> bool:
        return external in self._item_index

    @classmethod
    def from_lists(cls, users, items) -> "IdMap":
        m = cls()
        for u in users:
            m.add_user(u)
        for v in items:
            m.add_item(v)
        if len(m.users) != len(users) or len(m.items) != len(items):
            raise ValidationError("duplicate external identifiers in id lists")
        return m


def _detect_separator(line: str) -> str:
    if "\t" in line:
        return "\t"
    if "," in line:
        return ","
    # single-column fallback; whitespace-delimited files use sep=None
    return ","


def _split_line(line: str, sep):
    if sep is None:
        return line.split()
    return [field.strip() for field in line.split(sep)]


def _parse_rating_value(token: str):
    try:
        value = float(token)
    except ValueError:
        return None
    if not value.is_integer():
        return None
    return int(value)


def load_ratings(path, sep="auto", on_duplicate="error"):
    """Read a ratings file and remap identifiers to dense indices.

    Parameters
    ----------
    path: str or Path
        Delimited text file with ``user, item, rating`` per line.
    sep: str, None or "auto"
        Field separator. ``"auto"`` detects comma vs. tab from the first
        non-empty line; ``None`` splits on any whitespace.
    on_duplicate: {"error", "last"}
        Repeated ``(user, item)`` pairs are rejected by default; ``"last"``
        keeps the final occurrence.

    Returns
    -------
    (records, id_map): list of RatingRecord with internal indices, and the
    IdMap that translates back to external identifiers.
    """
    if on_duplicate not in ("error", "last"):
        raise ValueError(f"on_duplicate must be 'error' or 'last', got {on_duplicate!r}")
    path = Path(path)
    id_map = IdMap()
    by_pair: dict[tuple[int, int], int] = {}
    order: list[tuple[int, int]] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if sep == "auto":
                sep = _detect_separator(line)
            fields = _split_line(line, sep)
            if len(fields) != 3:
                raise ParseError(path, line_no, f"expected 3 fields, got {len(fields)}")
            user_tok, item_tok, rating_tok = fields
            if not user_tok or not item_tok:
                raise ParseError(path, line_no, "empty user or item identifier")
            rating = _parse_rating_value(rating_tok)
            if rating is None:
                raise ParseError(path, line_no, f"rating {rating_tok!r} is not an integer")
            if not RATING_MIN <= rating <= RATING_MAX:
                raise ValidationError(
                    f"{path}:{line_no}: rating {rating} outside [{RATING_MIN},{RATING_MAX}]"
                )
            u = id_map.add_user(user_tok)
            v = id_map.add_item(item_tok)
            key = (u, v)
            if key in by_pair:
                if on_duplicate == "error":
                    raise ValidationError(
                        f"{path}:{line_no}: duplicate rating for ({user_tok!r}, {item_tok!r})"
                    )
            else:
                order.append(key)
            by_pair[key] = rating
    records = [RatingRecord(u, v, by_pair[(u, v)]) for (u, v) in order]
    return records, id_map


def load_trust(path, id_map, sep="auto"):
    """Read a trust file of directed ``src, dst`` edges.

    Self-loops are dropped (counted in the returned info). Users absent from
    the rating file are added to ``id_map`` and counted as rating-less; they
    participate in the social graph but contribute no interactions.

    Returns
    -------
    (edges, info): deduplicated list of TrustEdge, and a dict with counts
    ``{"self_loops": int, "duplicates": int, "unknown_users": int}``.
    """
    path = Path(path)
    edges: list[TrustEdge] = []
    seen: set[tuple[int, int]] = set()
    info = {"self_loops": 0, "duplicates": 0, "unknown_users": 0}
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if sep == "auto":
                sep = _detect_separator(line)
            fields = _split_line(line, sep)
            # tolerate a trailing weight column (some dumps carry one)
            if len(fields) not in (2, 3):
                raise ParseError(path, line_no, f"expected 2 fields, got {len(fields)}")
            src_tok, dst_tok = fields[0], fields[1]
            if not src_tok or not dst_tok:
                raise ParseError(path, line_no, "empty user identifier")
            if src_tok == dst_tok:
                info["self_loops"] += 1
                continue
            for tok in (src_tok, dst_tok):
                if not id_map.has_user(tok):
                    info["unknown_users"] += 1
                    id_map.add_user(tok)
            edge = (id_map.user_index(src_tok), id_map.user_index(dst_tok))
            if edge in seen:
                info["duplicates"] += 1
                continue
            seen.add(edge)
            edges.append(TrustEdge(*edge))
    return edges, info


class DatasetBundle:
    """Indexed splits plus the train-side statistics the model depends on.

    All statistics (per-user / per-item average ratings, global mean) are
    computed on the training split only, so they are identical at train and
    evaluation time. Entities without training interactions fall back to the
    global mean.
    """

    def __init__(self, train, validation, test, trust, num_users, num_items,
                 id_map=None, seed=0, train_fraction=None):
        self.train = np.asarray(train, dtype=np.int64).reshape(-1, 3)
        self.validation = np.asarray(validation, dtype=np.int64).reshape(-1, 3)
        self.test = np.asarray(test, dtype=np.int64).reshape(-1, 3)
        self.trust = np.asarray(trust, dtype=np.int64).reshape(-1, 2)
        self.num_users = int(num_users)
        self.num_items = int(num_items)
        self.id_map = id_map
        self.seed = int(seed)
        self.train_fraction = train_fraction
        if len(self.train) == 0:
            raise ValidationError("empty dataset: training split has no ratings")
        self._compute_statistics()
        self._build_adjacency()

    def _compute_statistics(self):
        users = self.train[:, 0]
        items = self.train[:, 1]
        ratings = self.train[:, 2].astype(np.float64)
        self.user_rating_count = np.bincount(users, minlength=self.num_users)
        self.item_rating_count = np.bincount(items, minlength=self.num_items)
        user_sum = np.bincount(users, weights=ratings, minlength=self.num_users)
        item_sum = np.bincount(items, weights=ratings, minlength=self.num_items)
        self.global_mean = float(ratings.mean())
        self.user_avg = np.where(
            self.user_rating_count > 0,
            user_sum / np.maximum(self.user_rating_count, 1),
            self.global_mean,
        )
        self.item_avg = np.where(
            self.item_rating_count > 0,
            item_sum / np.maximum(self.item_rating_count, 1),
            self.global_mean,
        )

    def _build_adjacency(self):
        user_items: list[list[int]] = [[] for _ in range(self.num_users)]
        user_ratings: list[list[int]] = [[] for _ in range(self.num_users)]
        item_users: list[list[int]] = [[] for _ in range(self.num_items)]
        item_ratings: list[list[int]] = [[] for _ in range(self.num_items)]
        for u, v, r in self.train:
            user_items[u].append(v)
            user_ratings[u].append(r)
            item_users[v].append(u)
            item_ratings[v].append(r)
        self.user_items = [np.asarray(a, dtype=np.int64) for a in user_items]
        self.user_train_ratings = [np.asarray(a, dtype=np.int64) for a in user_ratings]
        self.item_users = [np.asarray(a, dtype=np.int64) for a in item_users]
        self.item_train_ratings = [np.asarray(a, dtype=np.int64) for a in item_ratings]
        self.user_rating_map = [
            dict(zip(it.tolist(), rt.tolist()))
            for it, rt in zip(self.user_items, self.user_train_ratings)
        ]
        neighbors: list[list[int]] = [[] for _ in range(self.num_users)]
        for s, d in self.trust:
            neighbors[s].append(d)
        self.social_neighbors = [np.asarray(a, dtype=np.int64) for a in neighbors]

    def _check_user(self, user):
        if not 0 <= user < self.num_users:
            raise KeyError(f"unknown user index {user}")

    def _check_item(self, item):
        if not 0 <= item < self.num_items:
            raise KeyError(f"unknown item index {item}")

    def user_average(self, user) -> float:
        """Mean train rating of ``user``; global mean if the user has none."""
        self._check_user(user)
        return float(self.user_avg[user])

    def item_average(self, item) -> float:
        """Mean train rating of ``item``; global mean if the item has none."""
        self._check_item(item)
        return float(self.item_avg[item])

    def items_of_user(self, user) -> np.ndarray:
        self._check_user(user)
        return self.user_items[user]

    def users_of_item(self, item) -> np.ndarray:
        self._check_item(item)
        return self.item_users[item]

    def neighbors_of_user(self, user) -> np.ndarray:
        self._check_user(user)
        return self.social_neighbors[user]

    def split(self, name) -> np.ndarray:
        try:
            return {"train": self.train, "validation": self.validation, "test": self.test}[name]
        except KeyError:
            raise ValueError(f"unknown split {name!r}") from None

    def content_hash(self) -> str:
        """Stable hash of splits, trust edges and dimensions."""
        h = hashlib.sha256()
        meta = json.dumps(
            {
                "num_users": self.num_users,
                "num_items": self.num_items,
                "seed": self.seed,
                "train_fraction": self.train_fraction,
            },
            sort_keys=True,
        )
        h.update(meta.encode())
        for arr in (self.train, self.validation, self.test, self.trust):
            h.update(np.ascontiguousarray(arr, dtype=np.int64).tobytes())
        return h.hexdigest()


def user_average(bundle, user) -> float:
    return bundle.user_average(user)


def item_average(bundle, item) -> float:
    return bundle.item_average(item)


def split_dataset(records, train_fraction, seed, trust=(), num_users=None,
                  num_items=None, id_map=None) -> DatasetBundle:
    """Split records into train/validation/test and build a DatasetBundle.

    The records are shuffled with a generator seeded by ``seed``; the first
    ``train_fraction`` become the training set and the remainder is assigned
    alternately to validation and test. The split is a pure function of
    (records, train_fraction, seed).
    """
    if len(records) == 0:
        raise ValidationError("empty dataset: nothing to split")
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0,1), got {train_fraction}")
    triples = np.asarray(
        [(rec.user, rec.item, rec.rating) for rec in records], dtype=np.int64
    )
    if num_users is None:
        num_users = id_map.num_users if id_map is not None else int(triples[:, 0].max()) + 1
    if num_items is None:
        num_items = id_map.num_items if id_map is not None else int(triples[:, 1].max()) + 1
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(records))
    n_train = int(round(len(records) * train_fraction))
    train_idx = perm[:n_train]
    holdout = perm[n_train:]
    val_idx = holdout[0::2]
    test_idx = holdout[1::2]
    trust_pairs = [(e.src, e.dst) if isinstance(e, TrustEdge) else tuple(e) for e in trust]
    return DatasetBundle(
        train=triples[train_idx],
        validation=triples[val_idx],
        test=triples[test_idx],
        trust=np.asarray(trust_pairs, dtype=np.int64).reshape(-1, 2),
        num_users=num_users,
        num_items=num_items,
        id_map=id_map,
        seed=seed,
        train_fraction=train_fraction,
    )


def load_dataset(ratings_path, trust_path=None, train_fraction=0.8, seed=0,
                 sep="auto", on_duplicate="error") -> DatasetBundle:
    """Convenience path from raw files to a ready DatasetBundle."""
    records, id_map = load_ratings(ratings_path, sep=sep, on_duplicate=on_duplicate)
    edges: list[TrustEdge] = []
    if trust_path is not None:
        edges, _ = load_trust(trust_path, id_map, sep=sep)
    return split_dataset(
        records, train_fraction, seed, trust=edges, id_map=id_map
    )
