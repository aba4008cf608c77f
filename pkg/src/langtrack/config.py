"""Run configuration: one flat, documented key set for the whole pipeline.

A config file is a JSON object over exactly these keys (all optional,
defaults below): alpha, beta, levels, knn_k, mp_steps, node_dim,
edge_dim, text_dim, lr, weight_decay, epochs, batch_clips, focal_gamma,
threshold, seed, and a string-valued ``paths`` object.  Unknown keys are
rejected.  The digest is the sha256 of the canonical JSON rendering, so
equal digests mean equal resolved configurations.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

__all__ = [
    "RunConfig",
    "load_config",
    "save_config",
    "config_digest",
    "apply_overrides",
]

@dataclass(frozen=True)
class RunConfig:
    """Desk-scale defaults; paper-scale values are plain overrides."""

    alpha: float = 1.0
    beta: float = 1.0
    levels: tuple[int, ...] = (5, 25, 75, 150)
    knn_k: int = 3
    mp_steps: int = 2
    node_dim: int = 64
    edge_dim: int = 16
    text_dim: int = 32
    lr: float = 2e-3
    weight_decay: float = 1e-4
    epochs: int = 30
    batch_clips: int = 1
    focal_gamma: float = 1.0
    threshold: float = 0.5
    seed: int = 0
    paths: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(int(v) for v in self.levels))
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be >= 0")
        if not self.levels:
            raise ValueError("levels must be non-empty")
        for name in ("knn_k", "mp_steps", "node_dim", "edge_dim", "text_dim", "batch_clips"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.lr <= 0 or self.weight_decay < 0:
            raise ValueError("lr must be > 0 and weight_decay >= 0")
        if not 0.0 <= self.threshold < 1.0:
            raise ValueError(f"threshold must be in [0, 1), got {self.threshold}")
        if self.focal_gamma < 0:
            raise ValueError("focal_gamma must be >= 0")
        for key, value in self.paths.items():
            if not isinstance(value, str):
                raise ValueError(f"paths.{key} must be a string")

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "levels": list(self.levels),
            "knn_k": self.knn_k,
            "mp_steps": self.mp_steps,
            "node_dim": self.node_dim,
            "edge_dim": self.edge_dim,
            "text_dim": self.text_dim,
            "lr": self.lr,
            "weight_decay": self.weight_decay,
            "epochs": self.epochs,
            "batch_clips": self.batch_clips,
            "focal_gamma": self.focal_gamma,
            "threshold": self.threshold,
            "seed": self.seed,
            "paths": dict(sorted(self.paths.items())),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(doc)
        if "levels" in kwargs:
            kwargs["levels"] = tuple(kwargs["levels"])
        if "paths" in kwargs and not isinstance(kwargs["paths"], dict):
            raise ValueError("paths must be an object of string values")
        return cls(**kwargs)


def load_config(path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"malformed config file: {exc}") from None
    if not isinstance(doc, dict):
        raise ValueError("config file must hold a JSON object")
    return RunConfig.from_dict(doc)


def save_config(path, config: RunConfig) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")


def config_digest(config: RunConfig) -> str:
    canonical = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def apply_overrides(config: RunConfig, overrides: list[str]) -> RunConfig:
    """Apply ``key=value`` scalar overrides (flags never touch levels/paths)."""
    updates = {}
    types = {
        "alpha": float, "beta": float, "knn_k": int, "mp_steps": int,
        "node_dim": int, "edge_dim": int, "text_dim": int, "lr": float,
        "weight_decay": float, "epochs": int, "batch_clips": int,
        "focal_gamma": float, "threshold": float, "seed": int,
    }
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        if key not in types:
            raise ValueError(f"unknown or non-scalar override key {key!r}")
        try:
            updates[key] = types[key](raw)
        except ValueError:
            raise ValueError(f"override {key}={raw!r} is not a valid {types[key].__name__}") from None
    return replace(config, **updates)
