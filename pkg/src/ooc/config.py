"""Declarative run configuration for the CLI.

Config files are flat ``key=value`` text with dotted keys, e.g.::

    paths.manifest=data/manifest.jsonl
    ratio_hard=0.75
    train.epochs=16
    cluster.k.climate=21

Blank lines and ``#`` comments are ignored.  The environment variable
``OOC_SEED`` overrides the config seed; explicit CLI flags win over both.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .store import TOPICS

DEFAULT_CLUSTER_K = {"climate": 21, "covid": 32, "military": 23}


@dataclass
class RunConfig:
    manifest: str | None = None
    text_emb: str | None = None
    img_emb: str | None = None
    ocr: str | None = None
    pairs: str | None = None
    model: str | None = None
    reports: str | None = None
    ratio_hard: float = 0.75
    cross_topic_count: int = 0
    fusion: str = "multiply"
    seed: int = 0
    topic_scope: str = "joint"
    hidden_width: int | None = None  # None: use the embedding width
    learning_rate: float = 5e-5
    epochs: int = 16
    batch_size: int = 512
    cluster_k: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_CLUSTER_K))


_PATH_KEYS = {
    "paths.manifest": "manifest",
    "paths.text_emb": "text_emb",
    "paths.img_emb": "img_emb",
    "paths.ocr": "ocr",
    "paths.pairs": "pairs",
    "paths.model": "model",
    "paths.reports": "reports",
}

_TYPED_KEYS = {
    "ratio_hard": ("ratio_hard", float),
    "cross_topic_count": ("cross_topic_count", int),
    "fusion": ("fusion", str),
    "seed": ("seed", int),
    "topic_scope": ("topic_scope", str),
    "hidden_width": ("hidden_width", int),
    "train.learning_rate": ("learning_rate", float),
    "train.epochs": ("epochs", int),
    "train.batch_size": ("batch_size", int),
}


def load_config(path: str | Path | None) -> RunConfig:
    """Parse a config file (or return defaults), then apply OOC_SEED."""
    cfg = RunConfig()
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file {p} not found")
        for lineno, raw in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{p}:{lineno}: expected key=value, got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            _apply(cfg, key, value, f"{p}:{lineno}")
    env_seed = os.environ.get("OOC_SEED")
    if env_seed is not None:
        try:
            cfg.seed = int(env_seed)
        except ValueError:
            raise ConfigError(f"OOC_SEED must be an integer, got {env_seed!r}") from None
    return cfg


def _apply(cfg: RunConfig, key: str, value: str, where: str) -> None:
    if key in _PATH_KEYS:
        setattr(cfg, _PATH_KEYS[key], value)
        return
    if key in _TYPED_KEYS:
        attr, typ = _TYPED_KEYS[key]
        try:
            setattr(cfg, attr, typ(value))
        except ValueError:
            raise ConfigError(f"{where}: bad value {value!r} for {key}") from None
        return
    if key.startswith("cluster.k."):
        topic = key[len("cluster.k."):]
        if topic not in TOPICS:
            raise ConfigError(f"{where}: unknown topic {topic!r} in {key}")
        try:
            cfg.cluster_k[topic] = int(value)
        except ValueError:
            raise ConfigError(f"{where}: bad value {value!r} for {key}") from None
        return
    raise ConfigError(f"{where}: unknown config key {key!r}")
