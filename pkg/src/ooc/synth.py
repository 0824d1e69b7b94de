"""Synthetic planted corpus for tests and offline pipeline runs.

Geometry: text embeddings live in per-topic sub-blobs inside a signal
subspace; each pristine image embedding is its caption's text vector plus
noise in the signal dims.  The last ``style_dims`` coordinates carry an
independent random "style" component on both sides.  Style contributes pure
noise to the raw dot product but is a fixed coordinate block, so a trained
multiply-fusion head can learn to discount it — giving the pipeline a
realistic trained-vs-zero-shot gap.  Hard negatives mined by text similarity
land in the caption's own blob and stay genuinely harder than random ones.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ArgumentError
from .store import (
    TOPICS,
    EmbeddingMatrix,
    OcrRecord,
    SampleRecord,
    save_manifest,
    save_matrix,
    save_ocr,
)

# 14/3/3 train/dev/test cycle, applied per topic.
_SPLIT_CYCLE = ("train",) * 14 + ("dev",) * 3 + ("test",) * 3

_GROUPS = ("text_represented", "text_not_represented")


@dataclass(frozen=True)
class SynthConfig:
    samples: int = 1000
    d: int = 64
    topics: tuple[str, ...] = TOPICS
    blobs_per_topic: int = 3
    seed: int = 0
    text_noise: float = 0.35
    image_noise: float = 0.15
    text_style: float = 0.20
    image_style: float = 0.35
    style_dims: int = 2

    def __post_init__(self):
        if self.samples < len(self.topics) * 2:
            raise ArgumentError("need at least 2 samples per topic")
        if self.d < self.style_dims + 8:
            raise ArgumentError(f"d={self.d} too small for {self.style_dims} style dims")
        for t in self.topics:
            if t not in TOPICS:
                raise ArgumentError(f"unknown topic {t!r} (expected one of {TOPICS})")


@dataclass
class SynthCorpus:
    records: list[SampleRecord]
    texts: EmbeddingMatrix
    images: EmbeddingMatrix
    ocr: list[OcrRecord]
    groups: dict[str, str]
    blob_of: dict[str, int] = field(default_factory=dict)


def _unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.standard_normal(dim)
    return v / np.sqrt(np.dot(v, v))


def generate(cfg: SynthConfig) -> SynthCorpus:
    rng = np.random.default_rng(cfg.seed)
    d_sig = cfg.d - cfg.style_dims
    n_topics = len(cfg.topics)
    n_blobs = n_topics * cfg.blobs_per_topic
    blob_centers = np.stack([_unit(rng, d_sig) for _ in range(n_blobs)])
    blob_vocab = [
        [f"{cfg.topics[b // cfg.blobs_per_topic]}blob{b}word{j}" for j in range(8)]
        for b in range(n_blobs)
    ]
    topic_vocab = {t: [f"{t}core{j}" for j in range(4)] for t in cfg.topics}

    records: list[SampleRecord] = []
    text_rows = np.empty((cfg.samples, cfg.d), dtype=np.float64)
    image_rows = np.empty((cfg.samples, cfg.d), dtype=np.float64)
    ocr: list[OcrRecord] = []
    groups: dict[str, str] = {}
    blob_of: dict[str, int] = {}
    per_topic_count = {t: 0 for t in cfg.topics}

    for i in range(cfg.samples):
        topic_index = i % n_topics
        topic = cfg.topics[topic_index]
        idx_in_topic = per_topic_count[topic]
        per_topic_count[topic] += 1
        blob = topic_index * cfg.blobs_per_topic + int(rng.integers(cfg.blobs_per_topic))
        split = _SPLIT_CYCLE[idx_in_topic % len(_SPLIT_CYCLE)]

        v = blob_centers[blob] + cfg.text_noise * _unit(rng, d_sig)
        v /= np.sqrt(np.dot(v, v))
        t_style = cfg.text_style * _unit(rng, cfg.style_dims)
        t_full = np.concatenate([v, t_style])
        text_rows[i] = t_full / np.sqrt(np.dot(t_full, t_full))

        w = v + cfg.image_noise * _unit(rng, d_sig)
        w /= np.sqrt(np.dot(w, w))
        a_style = cfg.image_style * _unit(rng, cfg.style_dims)
        a_full = np.concatenate([w, a_style])
        image_rows[i] = a_full / np.sqrt(np.dot(a_full, a_full))

        words = [blob_vocab[blob][int(j)] for j in rng.integers(8, size=int(rng.integers(3, 7)))]
        words += [topic_vocab[topic][int(j)] for j in rng.integers(4, size=2)]
        sid = f"s{i:05d}"
        records.append(SampleRecord(
            id=sid, topic=topic, text=" ".join(words),
            image_id=f"m{i:05d}", split=split,
        ))
        blob_of[sid] = blob

        boxes = []
        for _ in range(int(rng.integers(0, 4))):
            x1 = int(rng.integers(0, 255))
            y1 = int(rng.integers(0, 191))
            x2 = int(rng.integers(x1 + 1, 257))
            y2 = int(rng.integers(y1 + 1, 193))
            boxes.append((x1, y1, min(x2, 256), min(y2, 192)))
        ocr.append(OcrRecord(image_id=f"m{i:05d}", width=256, height=192, boxes=tuple(boxes)))
        groups[sid] = _GROUPS[int(rng.integers(2))]

    texts = EmbeddingMatrix(
        tuple(r.id for r in records), text_rows.astype(np.float32)
    )
    images = EmbeddingMatrix(
        tuple(r.image_id for r in records), image_rows.astype(np.float32)
    )
    return SynthCorpus(
        records=records, texts=texts, images=images, ocr=ocr,
        groups=groups, blob_of=blob_of,
    )


def write_corpus(corpus: SynthCorpus, out_dir: str | Path) -> dict[str, Path]:
    """Write manifest, EMB1 matrices, OCR, and group labels under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "manifest": out / "manifest.jsonl",
        "text_emb": out / "text.emb",
        "img_emb": out / "image.emb",
        "ocr": out / "ocr.jsonl",
        "groups": out / "groups.jsonl",
    }
    save_manifest(corpus.records, paths["manifest"])
    save_matrix(corpus.texts, paths["text_emb"])
    save_matrix(corpus.images, paths["img_emb"])
    save_ocr(corpus.ocr, paths["ocr"])
    with paths["groups"].open("w", encoding="utf-8") as fh:
        for sid in sorted(corpus.groups):
            fh.write(json.dumps({"id": sid, "group": corpus.groups[sid]}) + "\n")
    return paths


def load_groups(path: str | Path) -> dict[str, str]:
    out: dict[str, str] = {}
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                obj = json.loads(line)
                out[obj["id"]] = obj["group"]
    return out
