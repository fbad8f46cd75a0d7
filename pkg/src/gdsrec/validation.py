"""Input validation helpers for the estimator and array-facing entry points."""

from __future__ import annotations

import numbers

import numpy as np

from .datasets import RATING_MAX, RATING_MIN, ValidationError


def check_interaction_pairs(X) -> np.ndarray:
    """Coerce X to an (n, 2) array of (user, item) identifiers.

    Identifiers may be any hashable tokens (ints, strings); they are kept
    as-is and mapped to internal indices by the caller.
    """
    X = np.asarray(X, dtype=object)
    if X.ndim != 2 or X.shape[1] != 2:
        raise ValidationError(f"X must have shape (n_samples, 2), got {X.shape}")
    return X


def check_rating_values(y, n_samples) -> np.ndarray:
    """Validate ratings: integers on the 1..5 scale, one per sample."""
    y = np.asarray(y)
    if y.ndim != 1 or len(y) != n_samples:
        raise ValidationError(f"y must be 1-dimensional with {n_samples} entries")
    values = np.asarray(y, dtype=np.float64)
    if not np.all(np.isfinite(values)) or not np.all(values == np.round(values)):
        raise ValidationError("ratings must be integers")
    values = values.astype(np.int64)
    if values.min() < RATING_MIN or values.max() > RATING_MAX:
        raise ValidationError(f"ratings must lie in [{RATING_MIN},{RATING_MAX}]")
    return values


def check_trust_edges(trust) -> np.ndarray:
    """Coerce trust to an (m, 2) array of (src, dst) identifiers."""
    if trust is None:
        return np.empty((0, 2), dtype=object)
    trust = np.asarray(trust, dtype=object)
    if trust.ndim != 2 or trust.shape[1] != 2:
        raise ValidationError(f"trust must have shape (n_edges, 2), got {trust.shape}")
    return trust


def check_seed(seed) -> int:
    if not isinstance(seed, numbers.Integral):
        raise ValidationError(f"random_state must be an integer, got {seed!r}")
    return int(seed)


def check_fraction(name, value):
    value = float(value)
    if not 0.0 < value < 1.0:
        raise ValidationError(f"{name} must be in (0, 1), got {value}")
    return value
