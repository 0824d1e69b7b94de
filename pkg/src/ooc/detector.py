"""Embedding fusion, the classifier head, and the zero-shot baseline.

The head is a two-layer perceptron (input -> hidden -> 1 logit) trained with
Adam on binary cross-entropy, falsified = positive class.  Everything runs in
float64 numpy with a seeded shuffle and serial minibatch order, so training
is bit-deterministic given a seed.  The default hidden nonlinearity is ReLU;
an ``identity`` activation turns the head into a pure linear probe.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ArgumentError, DegenerateInputError, DivergenceError, FormatError, ValidationError
from .mismatch import LABEL_FALSIFIED, LabeledPair
from .store import EmbeddingMatrix

FUSIONS = ("concat", "concat_dot", "multiply")
ACTIVATIONS = ("relu", "identity")

MODEL_FORMAT_VERSION = 1


def feature_width(fusion: str, d: int) -> int:
    if fusion == "concat":
        return 2 * d
    if fusion == "concat_dot":
        return 2 * d + 1
    if fusion == "multiply":
        return d
    raise ArgumentError(f"unknown fusion {fusion!r} (expected one of {FUSIONS})")


def unit(vec: np.ndarray) -> np.ndarray:
    """Unit-normalize one vector in float64; rejects all-zero input."""
    v = np.asarray(vec, dtype=np.float64).ravel()
    norm = np.sqrt(np.dot(v, v))
    if norm == 0.0:
        raise DegenerateInputError("cannot normalize an all-zero vector")
    return v / norm


def fuse(img: np.ndarray, txt: np.ndarray, fusion: str) -> np.ndarray:
    """Combine unit image/text vectors into classifier features."""
    img = np.asarray(img, dtype=np.float64).ravel()
    txt = np.asarray(txt, dtype=np.float64).ravel()
    if img.shape != txt.shape:
        raise ArgumentError(
            f"dimension mismatch: image {img.shape[0]} vs text {txt.shape[0]}"
        )
    if fusion == "concat":
        return np.concatenate([img, txt])
    if fusion == "concat_dot":
        return np.concatenate([img, txt, [np.dot(img, txt)]])
    if fusion == "multiply":
        return img * txt
    raise ArgumentError(f"unknown fusion {fusion!r} (expected one of {FUSIONS})")


def zero_shot_score(img: np.ndarray, txt: np.ndarray) -> float:
    """Dot product of unit vectors; higher means more likely pristine."""
    img = np.asarray(img, dtype=np.float64).ravel()
    txt = np.asarray(txt, dtype=np.float64).ravel()
    if img.shape != txt.shape:
        raise ArgumentError(
            f"dimension mismatch: image {img.shape[0]} vs text {txt.shape[0]}"
        )
    return float(np.dot(img, txt))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 5e-5
    epochs: int = 16
    batch_size: int = 512
    seed: int = 0
    mode: str = "head_only"

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ArgumentError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ArgumentError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ArgumentError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.mode != "head_only":
            raise ArgumentError(
                f"mode {self.mode!r} is not supported; only the randomly initialized "
                "head is trainable here"
            )


@dataclass(frozen=True)
class DetectorModel:
    """Fusion method plus the head weights that score a pair as falsified."""

    fusion: str
    d: int
    hidden_width: int
    seed: int
    w1: np.ndarray  # (feature_width, hidden_width)
    b1: np.ndarray  # (hidden_width,)
    w2: np.ndarray  # (hidden_width, 1)
    b2: np.ndarray  # (1,)
    activation: str = "relu"
    trained_epochs: int = 0

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ArgumentError(f"unknown activation {self.activation!r}")
        f = feature_width(self.fusion, self.d)
        expected = {
            "w1": (f, self.hidden_width), "b1": (self.hidden_width,),
            "w2": (self.hidden_width, 1), "b2": (1,),
        }
        for name, shape in expected.items():
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != shape:
                raise ValidationError(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"{name} contains non-finite values")
            object.__setattr__(self, name, arr)

    @property
    def parameter_count(self) -> int:
        return self.w1.size + self.b1.size + self.w2.size + self.b2.size

    def _hidden(self, z1: np.ndarray) -> np.ndarray:
        return np.maximum(z1, 0.0) if self.activation == "relu" else z1

    def logits(self, features: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(features, dtype=np.float64))
        z1 = x @ self.w1 + self.b1
        return (self._hidden(z1) @ self.w2 + self.b2).ravel()


def init_model(
    d: int,
    fusion: str,
    hidden_width: int,
    seed: int,
    activation: str = "relu",
) -> DetectorModel:
    """Fresh head with weights ~ uniform(-1/sqrt(fan_in), +1/sqrt(fan_in))."""
    if d < 1:
        raise ArgumentError(f"d must be >= 1, got {d}")
    if hidden_width < 1:
        raise ArgumentError(f"hidden_width must be >= 1, got {hidden_width}")
    f = feature_width(fusion, d)
    rng = np.random.default_rng(seed)
    bound1 = 1.0 / np.sqrt(f)
    bound2 = 1.0 / np.sqrt(hidden_width)
    return DetectorModel(
        fusion=fusion, d=d, hidden_width=hidden_width, seed=seed,
        w1=rng.uniform(-bound1, bound1, size=(f, hidden_width)),
        b1=rng.uniform(-bound1, bound1, size=hidden_width),
        w2=rng.uniform(-bound2, bound2, size=(hidden_width, 1)),
        b2=rng.uniform(-bound2, bound2, size=1),
        activation=activation,
    )


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _loss_and_grads_raw(
    params: dict[str, np.ndarray], activation: str, x: np.ndarray, y: np.ndarray
) -> tuple[float, dict[str, np.ndarray]]:
    z1 = x @ params["w1"] + params["b1"]
    a1 = np.maximum(z1, 0.0) if activation == "relu" else z1
    z = (a1 @ params["w2"] + params["b2"]).ravel()
    # log(1 + e^-|z|) + max(z, 0) - z*y is the numerically stable BCE on logits.
    loss = float(np.mean(np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))))

    g = (_sigmoid(z) - y) / z.size
    dw2 = a1.T @ g[:, None]
    db2 = np.array([g.sum()])
    da1 = g[:, None] @ params["w2"].T
    dz1 = da1 * (z1 > 0.0) if activation == "relu" else da1
    dw1 = x.T @ dz1
    db1 = dz1.sum(axis=0)
    return loss, {"w1": dw1, "b1": db1, "w2": dw2, "b2": db2}


def loss_and_grads(
    model: DetectorModel, features: np.ndarray, labels: np.ndarray
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean sigmoid-BCE loss and its analytic gradients w.r.t. the head weights."""
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    y = np.asarray(labels, dtype=np.float64).ravel()
    params = {k: getattr(model, k) for k in ("w1", "b1", "w2", "b2")}
    return _loss_and_grads_raw(params, model.activation, x, y)


def pair_features(
    pairs: Sequence[LabeledPair],
    img_store: EmbeddingMatrix,
    txt_store: EmbeddingMatrix,
    fusion: str,
) -> np.ndarray:
    """Fused features for a batch of pairs; vectors are unit-normalized on use."""
    feats = np.empty((len(pairs), feature_width(fusion, txt_store.d)))
    for i, p in enumerate(pairs):
        img = unit(img_store.lookup(p.image_id))
        txt = unit(txt_store.lookup(p.caption_id))
        feats[i] = fuse(img, txt, fusion)
    return feats


def pair_labels(pairs: Sequence[LabeledPair]) -> np.ndarray:
    return np.array([1.0 if p.label == LABEL_FALSIFIED else 0.0 for p in pairs])


def train(
    model: DetectorModel,
    pairs: Sequence[LabeledPair],
    img_store: EmbeddingMatrix,
    txt_store: EmbeddingMatrix,
    cfg: TrainConfig,
) -> tuple[DetectorModel, list[float]]:
    """Adam-train the head on labeled pairs; returns the model and per-epoch mean loss.

    Adam uses beta1=0.9, beta2=0.999, eps=1e-8.  Minibatches come from a
    seeded shuffle and are reduced serially, so identical inputs and seed
    give bit-identical weights.  A non-finite loss raises
    :class:`DivergenceError` naming the epoch.
    """
    if not pairs:
        raise ArgumentError("no training pairs")
    x = pair_features(pairs, img_store, txt_store, model.fusion)
    y = pair_labels(pairs)
    return train_on_features(model, x, y, cfg)


def train_on_features(
    model: DetectorModel, x: np.ndarray, y: np.ndarray, cfg: TrainConfig
) -> tuple[DetectorModel, list[float]]:
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).ravel()
    params = {k: np.array(getattr(model, k)) for k in ("w1", "b1", "w2", "b2")}
    m = {k: np.zeros_like(v) for k, v in params.items()}
    v = {k: np.zeros_like(p) for k, p in params.items()}
    step = 0
    rng = np.random.default_rng(cfg.seed)
    n = x.shape[0]
    trace: list[float] = []
    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = perm[start:start + cfg.batch_size]
            loss, grads = _loss_and_grads_raw(params, model.activation, x[batch], y[batch])
            if not np.isfinite(loss):
                raise DivergenceError(epoch)
            total += loss * batch.size
            step += 1
            for k, g in grads.items():
                m[k] = beta1 * m[k] + (1 - beta1) * g
                v[k] = beta2 * v[k] + (1 - beta2) * g * g
                m_hat = m[k] / (1 - beta1 ** step)
                v_hat = v[k] / (1 - beta2 ** step)
                params[k] = params[k] - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + eps)
        trace.append(total / n)
    return (
        replace(model, trained_epochs=model.trained_epochs + cfg.epochs, **params),
        trace,
    )


def score_features(model: DetectorModel, features: np.ndarray) -> np.ndarray:
    """Probability-falsified scores in (0, 1) for precomputed features."""
    return _sigmoid(model.logits(features))


def score_pairs(
    model: DetectorModel,
    pairs: Sequence[LabeledPair],
    img_store: EmbeddingMatrix,
    txt_store: EmbeddingMatrix,
) -> np.ndarray:
    return score_features(model, pair_features(pairs, img_store, txt_store, model.fusion))


def predict(
    model: DetectorModel,
    caption_id: str,
    image_id: str,
    img_store: EmbeddingMatrix,
    txt_store: EmbeddingMatrix,
) -> float:
    """Score one (caption, image) pair: sigmoid of the head logit, falsified-positive."""
    img = unit(img_store.lookup(image_id))
    txt = unit(txt_store.lookup(caption_id))
    return float(score_features(model, fuse(img, txt, model.fusion)[None, :])[0])


def zero_shot_scores(
    pairs: Sequence[LabeledPair],
    img_store: EmbeddingMatrix,
    txt_store: EmbeddingMatrix,
) -> np.ndarray:
    """Zero-shot dot products for a batch; higher means more likely pristine."""
    return np.array([
        zero_shot_score(unit(img_store.lookup(p.image_id)), unit(txt_store.lookup(p.caption_id)))
        for p in pairs
    ])


def save_model(model: DetectorModel, path: str | Path) -> None:
    """JSON model file; decimal floats round-trip float64 exactly."""
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "fusion": model.fusion,
        "d": model.d,
        "hidden_width": model.hidden_width,
        "activation": model.activation,
        "seed": model.seed,
        "trained_epochs": model.trained_epochs,
        "weights": {
            name: {
                "shape": list(getattr(model, name).shape),
                "data": getattr(model, name).ravel().tolist(),
            }
            for name in ("w1", "b1", "w2", "b2")
        },
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> DetectorModel:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc.msg})") from None
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise FormatError(
            f"{path}: unsupported format_version {doc.get('format_version')!r}"
        )
    try:
        weights = {
            name: np.array(doc["weights"][name]["data"], dtype=np.float64).reshape(
                doc["weights"][name]["shape"]
            )
            for name in ("w1", "b1", "w2", "b2")
        }
        return DetectorModel(
            fusion=doc["fusion"], d=doc["d"], hidden_width=doc["hidden_width"],
            seed=doc["seed"], activation=doc.get("activation", "relu"),
            trained_epochs=doc.get("trained_epochs", 0), **weights,
        )
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: malformed model file ({exc})") from None
