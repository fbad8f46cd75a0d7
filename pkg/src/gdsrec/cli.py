"""Command line interface: preprocess, train, evaluate, ablate."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .artifacts import (
    ArtifactError,
    MetricsLog,
    load_bundle,
    load_checkpoint,
    save_bundle,
    save_checkpoint,
    save_graph,
)
from .config import ATTENTION_CHOICES, RunConfig, normalize_attention
from .datasets import load_ratings, load_trust, split_dataset
from .graph import build_graph
from .metrics import evaluate_model, evaluate_predictions
from .model import VARIANT_NAMES, VariantFlags, predict_batch
from .training import TrainConfig, fit_model

log = logging.getLogger("gdsrec")

BUNDLE_FILE = "bundle.npz"
GRAPH_FILE = "graph.npz"
CHECKPOINT_FILE = "checkpoint.npz"
LAST_FILE = "last.npz"
METRICS_FILE = "metrics.log"


def _setup_logging():
    level = os.environ.get("GDSREC_LOG_LEVEL", "info").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s")


def _load_config(args) -> RunConfig:
    config = RunConfig.from_yaml(args.config) if args.config else RunConfig()
    overrides = {}
    for flag, key in (
        ("seed", "seed"), ("dataset_dir", "dataset_dir"), ("out", "out_dir"),
        ("task", "task"), ("F", "positive_threshold"), ("variant", "variant"),
        ("attention", "attention"), ("alpha", "alpha"), ("delta", "delta"),
        ("K", "neighbor_cap"), ("D", "embed_dim"), ("ratings", "ratings"),
        ("trust", "trust"), ("train_fraction", "train_fraction"),
        ("learning_rate", "learning_rate"), ("batch_size", "batch_size"),
        ("max_epochs", "max_epochs"),
    ):
        if hasattr(args, flag) and getattr(args, flag) is not None:
            overrides[key] = getattr(args, flag)
    return config.with_overrides(**overrides)


def _flags_from_config(config) -> VariantFlags:
    return VariantFlags.from_variant(
        config.variant,
        attention_mode=normalize_attention(config.attention),
        alpha=config.alpha,
    )


def _train_config(config) -> TrainConfig:
    return TrainConfig(
        embed_dim=config.embed_dim,
        neighbor_cap=config.neighbor_cap,
        delta=config.delta,
        learning_rate=config.learning_rate,
        batch_size=config.batch_size,
        max_epochs=config.max_epochs,
        patience=config.patience,
        task=config.task,
        positive_threshold=config.positive_threshold,
        alpha=config.alpha,
        seed=config.seed,
    )


def _preprocess(config, out_dir):
    ratings_path = config.ratings_path()
    if not ratings_path.exists():
        raise FileNotFoundError(f"ratings file not found: {ratings_path}")
    records, id_map = load_ratings(ratings_path, on_duplicate=config.on_duplicate)
    trust_edges, trust_info = [], {}
    trust_path = config.trust_path()
    if trust_path is not None:
        if not trust_path.exists():
            raise FileNotFoundError(f"trust file not found: {trust_path}")
        trust_edges, trust_info = load_trust(trust_path, id_map)
    bundle = split_dataset(
        records, config.train_fraction, config.seed, trust=trust_edges, id_map=id_map
    )
    graph = build_graph(bundle, delta=config.delta)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_bundle(bundle, out_dir / BUNDLE_FILE, delta=config.delta)
    save_graph(graph, out_dir / GRAPH_FILE, bundle.content_hash())
    print("dataset statistics")
    print(f"  users             {bundle.num_users}")
    print(f"  items             {bundle.num_items}")
    print(f"  ratings           {len(records)}")
    print(f"  social relations  {len(trust_edges)}")
    if trust_info:
        print(
            f"  (dropped {trust_info['self_loops']} self-loops, "
            f"{trust_info['duplicates']} duplicate edges; "
            f"{trust_info['unknown_users']} users appear only in trust data)"
        )
    print(f"  splits            {len(bundle.train)}/{len(bundle.validation)}/{len(bundle.test)}")
    return bundle, graph


def cmd_preprocess(args) -> int:
    config = _load_config(args)
    _preprocess(config, Path(config.out_dir))
    return 0


def _load_or_preprocess(config, out_dir):
    bundle_path = out_dir / BUNDLE_FILE
    if bundle_path.exists():
        bundle = load_bundle(bundle_path)
        graph = build_graph(bundle, delta=config.delta)
        return bundle, graph
    log.info("no preprocessed artifacts under %s, running preprocess", out_dir)
    return _preprocess(config, out_dir)


def cmd_train(args) -> int:
    config = _load_config(args)
    out_dir = Path(config.out_dir)
    bundle, graph = _load_or_preprocess(config, out_dir)
    train_config = _train_config(config)
    flags = _flags_from_config(config)
    metrics_log = MetricsLog(out_dir / METRICS_FILE)
    provenance = {
        "dataset_hash": bundle.content_hash(),
        "split_seed": bundle.seed,
        "train_fraction": bundle.train_fraction,
        "seed": config.seed,
        "delta": config.delta,
        "neighbor_cap": config.neighbor_cap,
        "embed_dim": config.embed_dim,
        "task": config.task,
    }

    def on_epoch(metrics, params):
        metrics_log.append(metrics)
        save_checkpoint(
            out_dir / LAST_FILE, params, flags,
            {**provenance, "epoch": metrics.epoch, "role": "last"},
        )
        log.info(
            "epoch %d: train_loss=%.6f val_mae=%.6f val_rmse=%.6f",
            metrics.epoch, metrics.train_loss, metrics.val_mae, metrics.val_rmse,
        )

    result = fit_model(bundle, graph, train_config, flags, callback=on_epoch)

    save_checkpoint(
        out_dir / CHECKPOINT_FILE, result.params, flags,
        {**provenance, "epoch": result.best_epoch, "role": "best"},
    )
    print(f"trained {len(result.history)} epochs; best epoch {result.best_epoch}"
          f"{' (early stop)' if result.stopped_early else ''}")
    print(f"checkpoint: {out_dir / CHECKPOINT_FILE}")
    print(f"metrics log: {out_dir / METRICS_FILE}")
    return 0


def cmd_evaluate(args) -> int:
    out_dir = Path(args.out) if args.out else Path(args.checkpoint).parent
    checkpoint_path = Path(args.checkpoint) if args.checkpoint else out_dir / CHECKPOINT_FILE
    bundle = load_bundle(out_dir / BUNDLE_FILE)
    params, flags, meta = load_checkpoint(checkpoint_path)
    stored_hash = meta["provenance"].get("dataset_hash")
    if stored_hash != bundle.content_hash():
        raise ArtifactError(
            f"{checkpoint_path}: checkpoint was trained on a different dataset "
            f"(hash {stored_hash} != {bundle.content_hash()})"
        )
    graph = build_graph(bundle, delta=meta["provenance"].get("delta", 1))
    threshold = args.F if args.F is not None else 4
    data = bundle.split(args.split)
    if len(data) == 0:
        raise ValueError(f"split {args.split!r} is empty")
    predictions = predict_batch(data[:, 0], data[:, 1], graph, bundle, params, flags)
    if args.clip_predictions:
        predictions = np.clip(predictions, 1.0, 5.0)
    report = evaluate_predictions(
        data[:, :2], data[:, 2], predictions,
        positive_threshold=threshold, split=args.split,
    )
    print(report.summary())
    record = {
        "report": report.to_dict(),
        "dataset_hash": stored_hash,
        "flags": flags.to_dict(),
        "provenance": meta["provenance"],
    }
    report_path = out_dir / f"report_{args.split}.json"
    report_path.write_text(json.dumps(record, sort_keys=True, indent=2) + "\n")
    print(f"report: {report_path}")
    return 0


def _ablation_cells(config):
    cells = [("base", config)]
    for variant in config.sweeps.get("variant", []):
        if variant == config.variant:
            continue
        cells.append((f"variant={variant}", config.with_overrides(variant=variant)))
    for mode in config.sweeps.get("attention", []):
        if mode == config.attention:
            continue
        cells.append((f"attention={mode}", config.with_overrides(attention=mode)))
    for alpha in config.sweeps.get("alpha", []):
        if abs(alpha - config.alpha) < 1e-12:
            continue
        cells.append((f"alpha={alpha:g}", config.with_overrides(alpha=float(alpha))))
    for delta in config.sweeps.get("delta", []):
        if delta == config.delta:
            continue
        cells.append((f"delta={delta}", config.with_overrides(delta=int(delta))))
    for cap in config.sweeps.get("neighbor_cap", []):
        if cap == config.neighbor_cap:
            continue
        cells.append((f"K={cap}", config.with_overrides(neighbor_cap=int(cap))))
    return cells


def cmd_ablate(args) -> int:
    config = _load_config(args)
    cells = _ablation_cells(config)
    if len(cells) <= 1:
        raise ValueError("no sweep values configured; add a 'sweeps' section")
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for name, cell_config in cells:
        cell_dir = out_dir / name.replace("=", "_")
        try:
            bundle, graph = _load_or_preprocess(cell_config, cell_dir)
            result = fit_model(
                bundle, graph, _train_config(cell_config), _flags_from_config(cell_config)
            )
            report = evaluate_model(
                result.params, graph, bundle, result.flags,
                split="test", positive_threshold=cell_config.positive_threshold,
            )
            rows.append({
                "cell": name,
                "mae": report.mae,
                "rmse": report.rmse,
                "recall_at_5": report.recall_at_5,
                "ndcg": report.ndcg,
                "best_epoch": result.best_epoch,
            })
        except Exception as exc:  # keep sweeping; record the failure
            log.error("cell %s failed: %s", name, exc)
            rows.append({"cell": name, "error": str(exc)})
    header = f"{'cell':<18}{'MAE':>10}{'RMSE':>10}{'Recall@5':>10}{'NDCG':>10}"
    print(header)
    print("-" * len(header))
    for row in rows:
        if "error" in row:
            print(f"{row['cell']:<18}  failed: {row['error']}")
        else:
            print(
                f"{row['cell']:<18}{row['mae']:>10.4f}{row['rmse']:>10.4f}"
                f"{row['recall_at_5']:>10.4f}{row['ndcg']:>10.4f}"
            )
    (out_dir / "ablation.json").write_text(json.dumps(rows, sort_keys=True, indent=2) + "\n")
    return 0


def _add_common_flags(parser):
    parser.add_argument("--config", help="YAML run configuration")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--dataset-dir", dest="dataset_dir")
    parser.add_argument("--ratings")
    parser.add_argument("--trust")
    parser.add_argument("--out")
    parser.add_argument("--task", choices=("rating", "ranking"))
    parser.add_argument("--F", type=int, choices=(3, 4))
    parser.add_argument("--variant", choices=VARIANT_NAMES)
    parser.add_argument("--attention", choices=ATTENTION_CHOICES)
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--delta", type=int)
    parser.add_argument("--K", type=int)
    parser.add_argument("--D", type=int)
    parser.add_argument("--train-fraction", dest="train_fraction", type=float)
    parser.add_argument("--learning-rate", dest="learning_rate", type=float)
    parser.add_argument("--batch-size", dest="batch_size", type=int)
    parser.add_argument("--max-epochs", dest="max_epochs", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gdsrec",
        description="Decentralized graph social recommender: preprocess, train, evaluate, ablate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="build and persist bundle and graph artifacts")
    _add_common_flags(p)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train with early stopping; writes checkpoint and log")
    _add_common_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on a held-out split")
    p.add_argument("--checkpoint")
    p.add_argument("--out")
    p.add_argument("--split", choices=("validation", "test"), default="test")
    p.add_argument("--F", type=int, choices=(3, 4))
    p.add_argument("--clip-predictions", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="run the configured sweeps and print a comparison table")
    _add_common_flags(p)
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
