"""Versioned on-disk artifacts: bundle, graph, checkpoint, metrics log.

Every artifact is an ``.npz`` container with a ``meta`` JSON entry carrying
the format name/version and provenance (dataset hash, split seed, delta,
...). Serialization is byte-deterministic for fixed inputs, so identical
runs produce identical file hashes.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .datasets import DatasetBundle, IdMap
from .graph import DecentralizedGraph, build_graph
from .model import ModelParams, VariantFlags

BUNDLE_FORMAT = ("gdsrec-bundle", 1)
GRAPH_FORMAT = ("gdsrec-graph", 1)
CHECKPOINT_FORMAT = ("gdsrec-checkpoint", 1)
METRICS_HEADER = "# gdsrec-metrics v1: epoch, train_loss, val_mae, val_rmse"


class ArtifactError(ValueError):
    """Wrong format, version, or provenance mismatch."""


def _write_npz(path, meta, arrays):
    payload = {"meta": np.bytes_(json.dumps(meta, sort_keys=True).encode())}
    payload.update(arrays)
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def _read_npz(path, expected_format):
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(bytes(data["meta"].item()).decode())
        name, version = expected_format
        if meta.get("format") != name:
            raise ArtifactError(f"{path}: expected format {name!r}, got {meta.get('format')!r}")
        if meta.get("version") != version:
            raise ArtifactError(f"{path}: unsupported {name} version {meta.get('version')}")
        arrays = {key: data[key] for key in data.files if key != "meta"}
    return meta, arrays


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def save_bundle(bundle, path, delta=None):
    """Persist splits, trust edges and the external-id mapping.

    ``delta`` records the threshold the preprocessing run was configured
    with; it is provenance only (the bundle itself is delta-independent).
    """
    meta = {
        "format": BUNDLE_FORMAT[0],
        "version": BUNDLE_FORMAT[1],
        "num_users": bundle.num_users,
        "num_items": bundle.num_items,
        "seed": bundle.seed,
        "train_fraction": bundle.train_fraction,
        "delta": delta,
        "dataset_hash": bundle.content_hash(),
    }
    arrays = {
        "train": bundle.train,
        "validation": bundle.validation,
        "test": bundle.test,
        "trust": bundle.trust,
    }
    if bundle.id_map is not None:
        arrays["external_users"] = np.asarray(bundle.id_map.users, dtype=np.str_)
        arrays["external_items"] = np.asarray(bundle.id_map.items, dtype=np.str_)
    _write_npz(path, meta, arrays)


def load_bundle(path) -> DatasetBundle:
    meta, arrays = _read_npz(path, BUNDLE_FORMAT)
    id_map = None
    if "external_users" in arrays:
        id_map = IdMap.from_lists(
            arrays["external_users"].tolist(), arrays["external_items"].tolist()
        )
    bundle = DatasetBundle(
        train=arrays["train"],
        validation=arrays["validation"],
        test=arrays["test"],
        trust=arrays["trust"],
        num_users=meta["num_users"],
        num_items=meta["num_items"],
        id_map=id_map,
        seed=meta["seed"],
        train_fraction=meta["train_fraction"],
    )
    if bundle.content_hash() != meta["dataset_hash"]:
        raise ArtifactError(f"{path}: stored dataset hash does not match contents")
    return bundle


def _pack_ragged(rows):
    """Concatenate variable-length int rows into (values, offsets)."""
    offsets = np.zeros(len(rows) + 1, dtype=np.int64)
    for i, row in enumerate(rows):
        offsets[i + 1] = offsets[i] + len(row)
    if offsets[-1] == 0:
        return np.empty(0, dtype=np.int64), offsets
    return np.concatenate([np.asarray(r, dtype=np.int64) for r in rows if len(r)]), offsets


def save_graph(graph, path, dataset_hash):
    """Persist the per-view adjacency of a decentralized graph."""
    meta = {
        "format": GRAPH_FORMAT[0],
        "version": GRAPH_FORMAT[1],
        "delta": graph.delta,
        "num_users": graph.num_users,
        "num_items": graph.num_items,
        "dataset_hash": dataset_hash,
    }
    arrays = {}
    for prefix, rows in (
        ("user_items", graph.user_items),
        ("user_levels", graph.user_levels),
        ("user_ratings", graph.user_ratings),
        ("item_users", graph.item_users),
        ("item_levels", graph.item_levels),
        ("item_ratings", graph.item_ratings),
        ("social_neighbors", graph.social_neighbors),
        ("social_coefficients", graph.social_coefficients),
    ):
        values, offsets = _pack_ragged(rows)
        arrays[f"{prefix}_values"] = values
        arrays[f"{prefix}_offsets"] = offsets
    _write_npz(path, meta, arrays)


def load_graph(path, bundle) -> DecentralizedGraph:
    """Rebuild a graph from a bundle and verify it matches the stored one."""
    meta, arrays = _read_npz(path, GRAPH_FORMAT)
    if meta["dataset_hash"] != bundle.content_hash():
        raise ArtifactError(f"{path}: graph was built from a different dataset")
    graph = build_graph(bundle, delta=meta["delta"])
    stored = arrays["user_levels_values"]
    rebuilt, _ = _pack_ragged(graph.user_levels)
    if not np.array_equal(stored, rebuilt):
        raise ArtifactError(f"{path}: stored levels disagree with the bundle")
    return graph


def save_checkpoint(path, params, flags, provenance):
    """Persist parameters with their variant flags and provenance.

    ``provenance`` must include the dataset hash and the reproducibility
    inputs (seed, epoch, delta, neighbor cap, embedding size).
    """
    meta = {
        "format": CHECKPOINT_FORMAT[0],
        "version": CHECKPOINT_FORMAT[1],
        "num_users": params.num_users,
        "num_items": params.num_items,
        "embed_dim": params.embed_dim,
        "flags": flags.to_dict(),
        "provenance": provenance,
        "shapes": {name: list(t.data.shape) for name, t in params.tensors.items()},
    }
    _write_npz(path, meta, {name: t.data for name, t in params.tensors.items()})


def load_checkpoint(path):
    """Returns (params, flags, meta)."""
    meta, arrays = _read_npz(path, CHECKPOINT_FORMAT)
    params = ModelParams.from_arrays(
        arrays, meta["num_users"], meta["num_items"], meta["embed_dim"]
    )
    flags = VariantFlags(**meta["flags"])
    return params, flags, meta


class MetricsLog:
    """Line-delimited training log: one row per epoch, deterministic bytes."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.write_text(METRICS_HEADER + "\n", encoding="utf-8")

    def append(self, metrics):
        # plain-float repr is the shortest round-trip form, so logs are
        # lossless and byte-stable
        line = (
            f"{int(metrics.epoch)}\t{float(metrics.train_loss)!r}"
            f"\t{float(metrics.val_mae)!r}\t{float(metrics.val_rmse)!r}\n"
        )
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(line)

    @staticmethod
    def read(path):
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines or not lines[0].startswith("# gdsrec-metrics v1"):
            raise ArtifactError(f"{path}: not a metrics log")
        rows = []
        for line in lines[1:]:
            epoch, train_loss, val_mae, val_rmse = line.split("\t")
            rows.append(
                {
                    "epoch": int(epoch),
                    "train_loss": float(train_loss),
                    "val_mae": float(val_mae),
                    "val_rmse": float(val_rmse),
                }
            )
        return rows
