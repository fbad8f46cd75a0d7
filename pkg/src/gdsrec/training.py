"""Objectives, RMSprop, the epoch loop, node-dropout scheduling, early stop.

Training is a pure function of (dataset, config, seed): batch order, node
dropout and initialization all derive their generators from the master seed,
so two runs with identical inputs produce identical parameters and logs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .graph import sample_epoch
from .metrics import mae_rmse
from .model import ModelParams, VariantFlags, forward_ratings, predict_batch

_STREAM_SHUFFLE = 101


class TrainingDiverged(FloatingPointError):
    """Loss or parameters became non-finite."""


@dataclass
class TrainConfig:
    embed_dim: int = 32
    neighbor_cap: int = 10
    delta: int = 1
    learning_rate: float = 5e-4
    batch_size: int = 128
    max_epochs: int = 200
    patience: int = 10
    task: str = "rating"
    positive_threshold: int = 4
    alpha: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.task not in ("rating", "ranking"):
            raise ValueError(f"task must be 'rating' or 'ranking', got {self.task!r}")
        for name in ("embed_dim", "neighbor_cap", "batch_size", "max_epochs", "patience"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.delta < 0:
            raise ValueError("delta must be >= 0")
        if self.positive_threshold not in (3, 4):
            raise ValueError("positive_threshold must be 3 or 4")


@dataclass
class RMSpropState:
    """Per-parameter running average of squared gradients."""

    accumulators: dict
    rho: float = 0.99
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, rho=0.99, eps=1e-8) -> "RMSpropState":
        acc = {name: np.zeros_like(t.data) for name, t in params.tensors.items()}
        return cls(accumulators=acc, rho=rho, eps=eps)


def rmsprop_step(params, grads, state, learning_rate):
    """One adaptive update: acc <- rho*acc + (1-rho)*g^2; p -= lr*g/(sqrt(acc)+eps)."""
    for name, tensor in params.tensors.items():
        g = grads[name]
        acc = state.accumulators[name]
        with np.errstate(invalid="ignore", over="ignore"):
            acc *= state.rho
            acc += (1.0 - state.rho) * g * g
            update = learning_rate * g / (np.sqrt(acc) + state.eps)
        if not np.all(np.isfinite(update)):
            raise TrainingDiverged(f"non-finite update for parameter {name}")
        tensor.data = tensor.data - update


def _batch_forward(batch, neigh, bundle, params, flags, usage=None):
    users = batch[:, 0]
    items = batch[:, 1]
    predicted = forward_ratings(users, items, neigh, bundle, params, flags, usage=usage)
    return predicted


def rating_loss(batch, neigh, bundle, params, flags, usage=None):
    """Half mean squared error over the batch, with parameter gradients."""
    params.zero_grad()
    predicted = _batch_forward(batch, neigh, bundle, params, flags, usage)
    residual = predicted - np.asarray(batch[:, 2], dtype=np.float64)
    loss = ad.mul(ad.tensor_sum(ad.mul(residual, residual)), 0.5 / len(batch))
    value = loss.item()
    if not math.isfinite(value):
        raise TrainingDiverged(f"rating loss is not finite: {value}")
    loss.backward()
    return value, params.gradients()


def ranking_loss(batch, neigh, bundle, params, flags, positive_threshold, usage=None):
    """Mean binary cross-entropy on sigmoid-squashed predictions.

    A sample is positive when its rating reaches ``positive_threshold``.
    """
    params.zero_grad()
    predicted = _batch_forward(batch, neigh, bundle, params, flags, usage)
    labels = (batch[:, 2] >= positive_threshold).astype(np.float64)
    loss = ad.tensor_mean(ad.bce_with_logits(predicted, labels))
    value = loss.item()
    if not math.isfinite(value):
        raise TrainingDiverged(f"ranking loss is not finite: {value}")
    loss.backward()
    return value, params.gradients()


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    val_mae: float
    val_rmse: float

    @property
    def val_sum(self):
        return self.val_mae + self.val_rmse


def _validation_metrics(bundle, graph, params, flags):
    split = bundle.validation
    if len(split) == 0:
        return float("nan"), float("nan")
    predicted = predict_batch(split[:, 0], split[:, 1], graph, bundle, params, flags)
    return mae_rmse(predicted, split[:, 2])


def train_epoch(bundle, graph, params, state, config, flags, epoch, usage=None) -> EpochMetrics:
    """One pass over the shuffled train split with fresh node-dropout samples."""
    sample = sample_epoch(graph, config.neighbor_cap, config.seed, epoch)
    rng = np.random.default_rng([config.seed, epoch, _STREAM_SHUFFLE])
    order = rng.permutation(len(bundle.train))
    total, seen = 0.0, 0
    for start in range(0, len(order), config.batch_size):
        batch = bundle.train[order[start:start + config.batch_size]]
        if config.task == "rating":
            value, grads = rating_loss(batch, sample, bundle, params, flags, usage)
        else:
            value, grads = ranking_loss(
                batch, sample, bundle, params, flags, config.positive_threshold, usage
            )
        rmsprop_step(params, grads, state, config.learning_rate)
        total += value * len(batch)
        seen += len(batch)
    params.check_finite()
    val_mae, val_rmse = _validation_metrics(bundle, graph, params, flags)
    return EpochMetrics(epoch=epoch, train_loss=total / seen, val_mae=val_mae, val_rmse=val_rmse)


def should_stop(history, patience=10) -> bool:
    """True when the metric rose strictly for ``patience`` successive epochs."""
    if len(history) < patience + 1:
        return False
    tail = history[-(patience + 1):]
    return all(b > a for a, b in zip(tail, tail[1:]))


class EarlyStopper:
    """Tracks the validation metric, the best epoch, and the stop rule."""

    def __init__(self, patience=10):
        self.patience = patience
        self.history: list[float] = []
        self.best_value = math.inf
        self.best_epoch = None

    def update(self, epoch, value) -> bool:
        """Record one epoch; returns True when training should stop."""
        self.history.append(value)
        if value < self.best_value:
            self.best_value = value
            self.best_epoch = epoch
        return should_stop(self.history, self.patience)


@dataclass
class TrainResult:
    params: ModelParams
    history: list
    best_epoch: int
    stopped_early: bool
    config: TrainConfig
    flags: VariantFlags


def fit_model(bundle, graph, config, flags=None, callback=None, usage=None) -> TrainResult:
    """Full training run with early stopping and best-epoch restoration.

    ``callback(metrics, params)`` is invoked after every epoch, e.g. to
    append to a metrics log or write a rolling checkpoint. The returned
    parameters are those of the epoch with the smallest validation MAE+RMSE
    (final parameters if validation is empty).
    """
    flags = flags or VariantFlags(alpha=config.alpha)
    params = ModelParams.initialize(
        bundle.num_users, bundle.num_items, config.embed_dim, seed=config.seed
    )
    state = RMSpropState.for_params(params)
    stopper = EarlyStopper(patience=config.patience)
    history: list[EpochMetrics] = []
    best_arrays = params.arrays()
    best_epoch = 0
    stopped = False
    for epoch in range(1, config.max_epochs + 1):
        metrics = train_epoch(bundle, graph, params, state, config, flags, epoch, usage)
        history.append(metrics)
        if callback is not None:
            callback(metrics, params)
        if math.isnan(metrics.val_sum):
            best_arrays = params.arrays()
            best_epoch = epoch
            continue
        stop = stopper.update(epoch, metrics.val_sum)
        if stopper.best_epoch == epoch:
            best_arrays = params.arrays()
            best_epoch = epoch
        if stop:
            stopped = True
            break
    params.load_arrays(best_arrays)
    return TrainResult(
        params=params,
        history=history,
        best_epoch=best_epoch,
        stopped_early=stopped,
        config=config,
        flags=flags,
    )
