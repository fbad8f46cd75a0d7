"""Declarative run configuration: YAML file plus command-line overrides."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .model import ATTENTION_MODES, VARIANT_NAMES

DELTA_GRID = (0, 1, 2, 3)
ALPHA_GRID = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6)
ATTENTION_CHOICES = ("softmax", "avg", "max")


def normalize_attention(mode) -> str:
    """CLI spelling -> internal mode name."""
    return {"avg": "uniform_avg"}.get(mode, mode)


@dataclass
class RunConfig:
    """Everything one reproducible run needs, sweeps included."""

    ratings: str | None = None
    trust: str | None = None
    dataset_dir: str | None = None
    out_dir: str = "runs/default"
    train_fraction: float = 0.8
    on_duplicate: str = "error"

    embed_dim: int = 32
    neighbor_cap: int = 10
    delta: int = 1
    learning_rate: float = 5e-4
    batch_size: int = 128
    max_epochs: int = 50
    patience: int = 10
    task: str = "rating"
    positive_threshold: int = 4
    seed: int = 0

    variant: str = "base"
    attention: str = "softmax"
    alpha: float = 1.0

    sweeps: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.variant not in VARIANT_NAMES:
            raise ValueError(f"variant must be one of {VARIANT_NAMES}")
        if normalize_attention(self.attention) not in ATTENTION_MODES:
            raise ValueError(f"attention must be one of {ATTENTION_CHOICES}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must be in (0, 1)")
        allowed_axes = {"delta", "neighbor_cap", "alpha", "attention", "variant"}
        unknown = set(self.sweeps) - allowed_axes
        if unknown:
            raise ValueError(f"unknown sweep axes: {sorted(unknown)}")
        for value in self.sweeps.get("delta", ()):
            if value not in DELTA_GRID:
                raise ValueError(f"delta sweep value {value} outside grid {DELTA_GRID}")
        for value in self.sweeps.get("alpha", ()):
            if not any(abs(value - a) < 1e-12 for a in ALPHA_GRID):
                raise ValueError(f"alpha sweep value {value} outside grid {ALPHA_GRID}")
        for value in self.sweeps.get("attention", ()):
            if normalize_attention(value) not in ATTENTION_MODES:
                raise ValueError(f"attention sweep value {value!r} unknown")
        for value in self.sweeps.get("variant", ()):
            if value not in VARIANT_NAMES:
                raise ValueError(f"variant sweep value {value!r} unknown")
        for value in self.sweeps.get("neighbor_cap", ()):
            if int(value) < 1:
                raise ValueError("neighbor_cap sweep values must be >= 1")

    def ratings_path(self) -> Path:
        if self.ratings:
            return Path(self.ratings)
        if self.dataset_dir:
            return Path(self.dataset_dir) / "ratings.txt"
        raise ValueError("no ratings file: set 'ratings' or 'dataset_dir'")

    def trust_path(self):
        if self.trust:
            return Path(self.trust)
        if self.dataset_dir:
            candidate = Path(self.dataset_dir) / "trust.txt"
            if candidate.exists():
                return candidate
        return None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_yaml(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict):
            raise ValueError(f"{path}: config must be a mapping")
        return cls.from_dict(data)

    def to_yaml(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=True)

    def with_overrides(self, **overrides) -> "RunConfig":
        data = self.to_dict()
        for key, value in overrides.items():
            if value is None:
                continue
            if key not in data:
                raise ValueError(f"unknown override {key!r}")
            data[key] = value
        return RunConfig.from_dict(data)
