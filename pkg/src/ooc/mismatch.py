"""Falsified-pair generation: random, hard, and cross-topic mismatches.

Hard mining is exact top-1 over blocked float64 dot products; no approximate
index.  Every operation is deterministic given its seed, with ties broken by
the lexicographically smallest sample id.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    ArgumentError,
    FormatError,
    InsufficientCandidatesError,
    ValidationError,
)
from .store import EmbeddingMatrix, SampleRecord

LABEL_PRISTINE = "pristine"
LABEL_FALSIFIED = "falsified"
LABELS = (LABEL_PRISTINE, LABEL_FALSIFIED)

METHOD_NONE = "none"
METHOD_RANDOM = "random"
METHOD_HARD = "hard"
METHOD_CROSS_TOPIC = "cross_topic"
METHODS = (METHOD_NONE, METHOD_RANDOM, METHOD_HARD, METHOD_CROSS_TOPIC)

_MINE_BLOCK = 256


@dataclass(frozen=True)
class LabeledPair:
    """A (caption, image) pair with its truth label and falsification method."""

    caption_id: str
    image_id: str
    label: str
    method: str

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValidationError(f"unknown label {self.label!r}")
        if self.method not in METHODS:
            raise ValidationError(f"unknown method {self.method!r}")
        if (self.label == LABEL_PRISTINE) != (self.method == METHOD_NONE):
            raise ValidationError(
                f"pair ({self.caption_id!r}, {self.image_id!r}): label {self.label!r} "
                f"inconsistent with method {self.method!r}"
            )


@dataclass
class DatasetManifest:
    """Balanced labeled dataset plus the knobs that produced it."""

    pairs: list[LabeledPair]
    ratio_hard: float
    seed: int
    topic_scope: str = "joint"

    def counts(self) -> dict[str, int]:
        out = {m: 0 for m in METHODS}
        for p in self.pairs:
            out[p.method] += 1
        out[LABEL_PRISTINE] = out.pop(METHOD_NONE)
        return out


def mine_hard(
    texts: EmbeddingMatrix,
    image_of: Mapping[str, str],
    caption_texts: Mapping[str, str] | None = None,
) -> dict[str, str]:
    """Map each caption to the image of its most text-similar other sample.

    ``texts`` must be unit-normalized and restricted to one topic; similarity
    is the float64 dot product, exact top-1 with ties broken by smallest
    candidate id.  When ``caption_texts`` is given, candidates whose text is
    byte-identical to the query's text are excluded (identical text plus a
    different image is arguably pristine, not falsified).
    """
    n = texts.n
    if n < 2:
        raise InsufficientCandidatesError(
            f"hard mining needs at least 2 samples in the partition, got {n}"
        )
    ids = texts.ids
    for sid in ids:
        if sid not in image_of:
            raise ArgumentError(f"no image recorded for sample {sid!r}")
    values = texts.values.astype(np.float64)
    # Lexicographic rank per row, for smallest-id tie-breaking.
    id_rank = np.argsort(np.argsort(np.asarray(ids, dtype=object), kind="stable"))

    result: dict[str, str] = {}
    for start in range(0, n, _MINE_BLOCK):
        stop = min(start + _MINE_BLOCK, n)
        sims = values[start:stop] @ values.T
        for local, row in enumerate(range(start, stop)):
            s = sims[local]
            s[row] = -np.inf
            if caption_texts is not None:
                query_text = caption_texts[ids[row]]
                for col in range(n):
                    if col != row and caption_texts[ids[col]] == query_text:
                        s[col] = -np.inf
            best = s.max()
            if best == -np.inf:
                raise InsufficientCandidatesError(
                    f"no eligible hard-negative candidate for {ids[row]!r}"
                )
            tied = np.flatnonzero(s == best)
            winner = tied[np.argmin(id_rank[tied])]
            result[ids[row]] = image_of[ids[int(winner)]]
    return result


def mine_random(
    captions: Sequence[SampleRecord],
    pool: Sequence[SampleRecord],
    seed: int,
) -> dict[str, str]:
    """Uniform image draw from ``pool`` for each caption, excluding its own image.

    Deterministic given the seed: captions are visited in sorted-id order and
    consume one draw each.
    """
    if len(pool) < 2:
        raise InsufficientCandidatesError(
            f"random mining needs a pool of at least 2 samples, got {len(pool)}"
        )
    pool_images = [rec.image_id for rec in pool]
    rng = np.random.default_rng(seed)
    result: dict[str, str] = {}
    for cap in sorted(captions, key=lambda r: r.id):
        candidates = [img for img in pool_images if img != cap.image_id]
        if not candidates:
            raise InsufficientCandidatesError(
                f"no non-self image available for caption {cap.id!r}"
            )
        result[cap.id] = candidates[int(rng.integers(len(candidates)))]
    return result


def mine_cross_topic(
    captions: Sequence[SampleRecord],
    pools_by_topic: Mapping[str, Sequence[SampleRecord]],
    seed: int,
) -> dict[str, str]:
    """Uniform image draw from the union of pools whose topic differs from the caption's."""
    topics = sorted(pools_by_topic)
    if len(topics) < 2:
        raise InsufficientCandidatesError(
            f"cross-topic mining needs at least 2 topics, got {len(topics)}"
        )
    images_by_topic = {t: [rec.image_id for rec in pools_by_topic[t]] for t in topics}
    rng = np.random.default_rng(seed)
    result: dict[str, str] = {}
    for cap in sorted(captions, key=lambda r: r.id):
        candidates = [
            img
            for topic in topics
            if topic != cap.topic
            for img in images_by_topic[topic]
        ]
        if not candidates:
            raise InsufficientCandidatesError(
                f"no other-topic image available for caption {cap.id!r} "
                f"(topic {cap.topic!r})"
            )
        result[cap.id] = candidates[int(rng.integers(len(candidates)))]
    return result


def _hard_quota(counts: dict[str, int], ratio_hard: float) -> dict[str, int]:
    """Per-topic hard counts by largest remainder, so the global ratio is
    exact up to rounding."""
    total = sum(counts.values())
    target = int(np.floor(ratio_hard * total + 0.5))
    base = {t: int(np.floor(ratio_hard * n)) for t, n in counts.items()}
    remainder = {t: ratio_hard * counts[t] - base[t] for t in counts}
    extra = target - sum(base.values())
    order = sorted(counts, key=lambda t: (-remainder[t], t))
    for t in order:
        if extra <= 0:
            break
        if base[t] < counts[t]:
            base[t] += 1
            extra -= 1
    return base


def build_dataset(
    pristine: Sequence[SampleRecord],
    texts: EmbeddingMatrix | None,
    ratio_hard: float,
    cross_topic_count: int,
    seed: int,
    topic_scope: str = "joint",
) -> DatasetManifest:
    """Assemble a balanced, ratio-controlled labeled dataset.

    One hard-or-random falsified pair is emitted per pristine caption; the
    hard/random split is assigned by seeded shuffle per topic (largest-
    remainder quotas), never by per-caption coin flips, so the realized ratio
    is exact up to rounding.  ``cross_topic_count`` extra cross-topic pairs
    are added, and pristine entries are repeated cycling in sorted-id order
    until pristine and falsified counts balance exactly.

    ``texts`` must cover all caption ids and be unit-normalized; it may be
    omitted only when ``ratio_hard == 0``.
    """
    if not 0.0 <= ratio_hard <= 1.0:
        raise ArgumentError(f"ratio_hard must be in [0, 1], got {ratio_hard}")
    if cross_topic_count < 0:
        raise ArgumentError(f"cross_topic_count must be >= 0, got {cross_topic_count}")
    if topic_scope not in ("per_topic", "joint"):
        raise ArgumentError(f"unknown topic_scope {topic_scope!r}")
    if not pristine:
        raise ArgumentError("no pristine samples to build from")
    if texts is None and ratio_hard > 0.0:
        raise ArgumentError("text embeddings are required when ratio_hard > 0")

    by_topic: dict[str, list[SampleRecord]] = {}
    for rec in pristine:
        by_topic.setdefault(rec.topic, []).append(rec)
    for topic in by_topic:
        by_topic[topic].sort(key=lambda r: r.id)

    rng = np.random.default_rng(seed)
    quotas = _hard_quota({t: len(v) for t, v in by_topic.items()}, ratio_hard)

    falsified: list[LabeledPair] = []
    for topic in sorted(by_topic):
        records = by_topic[topic]
        n_hard = quotas[topic]
        perm = rng.permutation(len(records))
        hard_caps = sorted((records[i] for i in perm[:n_hard]), key=lambda r: r.id)
        rand_caps = sorted((records[i] for i in perm[n_hard:]), key=lambda r: r.id)

        if hard_caps:
            sub = texts.subset([r.id for r in records])
            mapping = mine_hard(
                sub,
                image_of={r.id: r.image_id for r in records},
                caption_texts={r.id: r.text for r in records},
            )
            falsified.extend(
                LabeledPair(c.id, mapping[c.id], LABEL_FALSIFIED, METHOD_HARD)
                for c in hard_caps
            )
        if rand_caps:
            sub_seed = int(rng.integers(np.iinfo(np.int64).max))
            mapping = mine_random(rand_caps, records, seed=sub_seed)
            falsified.extend(
                LabeledPair(c.id, mapping[c.id], LABEL_FALSIFIED, METHOD_RANDOM)
                for c in rand_caps
            )

    # Cross-topic captions are drawn in rounds of distinct captions so a
    # caption picked twice still gets independent image draws.
    remaining = cross_topic_count
    all_sorted = sorted(pristine, key=lambda r: r.id)
    while remaining > 0:
        take = min(remaining, len(all_sorted))
        perm = rng.permutation(len(all_sorted))
        chosen = [all_sorted[int(i)] for i in perm[:take]]
        sub_seed = int(rng.integers(np.iinfo(np.int64).max))
        mapping = mine_cross_topic(chosen, by_topic, seed=sub_seed)
        falsified.extend(
            LabeledPair(c.id, mapping[c.id], LABEL_FALSIFIED, METHOD_CROSS_TOPIC)
            for c in sorted(chosen, key=lambda r: r.id)
        )
        remaining -= take

    pristine_pairs = [
        LabeledPair(r.id, r.image_id, LABEL_PRISTINE, METHOD_NONE) for r in all_sorted
    ]
    deficit = len(falsified) - len(pristine_pairs)
    for i in range(deficit):
        r = all_sorted[i % len(all_sorted)]
        pristine_pairs.append(LabeledPair(r.id, r.image_id, LABEL_PRISTINE, METHOD_NONE))

    return DatasetManifest(
        pairs=pristine_pairs + falsified,
        ratio_hard=ratio_hard,
        seed=seed,
        topic_scope=topic_scope,
    )


def save_pairs(pairs: Iterable[LabeledPair], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(json.dumps({
                "caption_id": p.caption_id, "image_id": p.image_id,
                "label": p.label, "method": p.method,
            }) + "\n")


def load_pairs(path: str | Path) -> list[LabeledPair]:
    path = Path(path)
    pairs: list[LabeledPair] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            where = f"{path}:{lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{where}: invalid JSON ({exc.msg})") from None
            try:
                pair = LabeledPair(
                    caption_id=obj["caption_id"], image_id=obj["image_id"],
                    label=obj["label"], method=obj["method"],
                )
            except KeyError as exc:
                raise FormatError(f"{where}: missing key {exc.args[0]!r}") from None
            except ValidationError as exc:
                raise ValidationError(f"{where}: {exc}") from None
            pairs.append(pair)
    return pairs
