"""Corpus analysis: OCR coverage, text clustering, TF-IDF cluster naming,
and within-/cross-cluster tagging of falsified pairs.

The clustering is a deterministic spherical k-means over the provided text
embeddings (kmeans++ seeding, cosine objective).  The downstream analysis
only needs a partition, so reproducibility outranks fidelity to any
particular density-based algorithm; there is no noise/outlier cluster and
every point gets assigned.
"""
from __future__ import annotations

import json
import re
import warnings
from collections import Counter
from dataclasses import dataclass
from math import log
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ArgumentError, MissingIdError
from .mismatch import LABEL_PRISTINE, LabeledPair
from .store import EmbeddingMatrix, OcrRecord

COVERAGE_BUCKETS = ("zero", "low", "mid", "high")

TAG_WITHIN = "within"
TAG_CROSS = "cross"
TAG_NA = "n/a"

# Fixed stopword list shipped with the artifact so cluster names are
# reproducible: common English function words only.
STOPWORDS = frozenset("""
a about above after again against all am an and any are aren as at be because
been before being below between both but by can cannot could couldn did didn
do does doesn doing don down during each few for from further had hadn has
hasn have haven having he her here hers herself him himself his how i if in
into is isn it its itself just ll me mightn more most mustn my myself needn
no nor not now of off on once only or other our ours ourselves out over own
re s same shan she should shouldn so some such t than that the their theirs
them themselves then there these they this those through to too under until
up ve very was wasn we were weren what when where which while who whom why
will with won would wouldn you your yours yourself yourselves
""".split())


def union_area(boxes: Sequence[Sequence[int]]) -> int:
    """Exact area of the union of axis-aligned integer rectangles.

    Coordinate compression over the <=2n distinct x and y edges; covered
    cells are summed in integer arithmetic, so the result is exact.
    """
    if not boxes:
        return 0
    xs = np.unique([v for b in boxes for v in (b[0], b[2])])
    ys = np.unique([v for b in boxes for v in (b[1], b[3])])
    covered = np.zeros((len(xs) - 1, len(ys) - 1), dtype=bool)
    for x1, y1, x2, y2 in boxes:
        i1, i2 = np.searchsorted(xs, (x1, x2))
        j1, j2 = np.searchsorted(ys, (y1, y2))
        covered[i1:i2, j1:j2] = True
    widths = np.diff(xs).astype(np.int64)
    heights = np.diff(ys).astype(np.int64)
    return int((widths[:, None] * heights[None, :])[covered].sum())


def ocr_coverage(rec: OcrRecord) -> float:
    """Fraction of the image covered by the union of text detections."""
    return union_area(rec.boxes) / (rec.width * rec.height)


def bucket(coverage: float) -> str:
    """Coverage bucket: =0%, (0,10%], (10%,50%], (50%,100%]; upper-inclusive."""
    if not 0.0 <= coverage <= 1.0:
        raise ArgumentError(f"coverage must be in [0, 1], got {coverage}")
    if coverage == 0.0:
        return "zero"
    if coverage <= 0.10:
        return "low"
    if coverage <= 0.50:
        return "mid"
    return "high"


@dataclass
class ClusterModel:
    """Partition of text embeddings plus optional TF-IDF naming."""

    k: int
    centroids: np.ndarray  # (k, d), unit rows
    assignments: dict[str, int]
    seed: int
    top_words: list[list[tuple[str, float]]] | None = None
    objective_trace: list[float] | None = None

    def names(self) -> list[str]:
        if self.top_words is None:
            raise ArgumentError("top words not computed; call cluster_top_words first")
        return [cluster_name(i, words) for i, words in enumerate(self.top_words)]


def _kmeans_pp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    chosen = [int(rng.integers(n))]
    # Squared Euclidean distance on unit vectors is 2 - 2cos.
    d2 = 2.0 - 2.0 * (x @ x[chosen[0]])
    d2[chosen[0]] = 0.0
    for _ in range(1, k):
        weights = np.clip(d2, 0.0, None)
        total = weights.sum()
        if total <= 0.0:
            remaining = sorted(set(range(n)) - set(chosen))
            nxt = remaining[0]
        else:
            nxt = int(rng.choice(n, p=weights / total))
        chosen.append(nxt)
        d2 = np.minimum(d2, 2.0 - 2.0 * (x @ x[nxt]))
        d2[nxt] = 0.0
    return x[chosen].copy()


def cluster_texts(
    texts: EmbeddingMatrix,
    k: int,
    seed: int,
    max_iter: int = 100,
    tol: float = 1e-6,
) -> ClusterModel:
    """Deterministic spherical k-means over unit text embeddings.

    kmeans++ seeding with the given seed, assignment to the max-dot centroid
    (ties to the lowest index), centroid = normalized mean.  Empty clusters
    are re-seeded from the point farthest from its assigned centroid.  The
    cosine objective (sum of 1 - cos) is non-increasing across iterations.
    """
    n = texts.n
    if not 2 <= k <= n:
        raise ArgumentError(f"need n >= k >= 2, got k={k}, n={n}")
    x = texts.values.astype(np.float64)
    norms = np.sqrt(np.einsum("ij,ij->i", x, x))
    if np.any(norms == 0.0):
        raise ArgumentError("cluster_texts requires rows with nonzero norm")
    x = x / norms[:, None]

    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp(x, k, rng)
    assign = np.zeros(n, dtype=np.int64)
    trace: list[float] = []
    for _ in range(max_iter):
        sims = x @ centroids.T
        assign = np.argmax(sims, axis=1)
        trace.append(float(np.sum(1.0 - sims[np.arange(n), assign])))

        taken: set[int] = set()
        for c in range(k):
            if np.any(assign == c):
                continue
            own_sim = sims[np.arange(n), assign]
            order = np.argsort(own_sim, kind="stable")
            far = next(int(i) for i in order if int(i) not in taken)
            taken.add(far)
            assign[far] = c
            centroids[c] = x[far]

        moved = 0.0
        for c in range(k):
            members = x[assign == c]
            mean = members.mean(axis=0)
            norm = np.sqrt(np.dot(mean, mean))
            if norm < 1e-12:
                # Antipodal cancellation: fall back to the farthest member.
                sims_c = members @ centroids[c]
                mean = members[int(np.argmin(sims_c))]
                norm = 1.0
            new = mean / norm
            moved = max(moved, float(np.sqrt(np.sum((new - centroids[c]) ** 2))))
            centroids[c] = new
        if moved < tol:
            break

    sims = x @ centroids.T
    assign = np.argmax(sims, axis=1)
    return ClusterModel(
        k=k,
        centroids=centroids,
        assignments={sid: int(c) for sid, c in zip(texts.ids, assign)},
        seed=seed,
        objective_trace=trace,
    )


def clustering_objective(texts: EmbeddingMatrix, model: ClusterModel) -> float:
    """Sum of (1 - cos) between each point and its assigned centroid."""
    x = texts.values.astype(np.float64)
    x = x / np.sqrt(np.einsum("ij,ij->i", x, x))[:, None]
    rows = np.array([model.assignments[sid] for sid in texts.ids])
    sims = np.einsum("ij,ij->i", x, model.centroids[rows])
    return float(np.sum(1.0 - sims))


_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase, split on non-alphanumerics (hashtags lose their '#'),
    drop tokens shorter than 2 chars and stopwords."""
    return [
        tok
        for tok in _TOKEN_RE.findall(text.lower())
        if len(tok) >= 2 and tok not in STOPWORDS
    ]


def cluster_top_words(
    texts_per_cluster: Sequence[Sequence[str]],
    n_words: int = 10,
) -> list[list[tuple[str, float]]]:
    """Most important words per cluster by TF-IDF score.

    Each cluster's concatenated text is one document:
    score(t, c) = (count(t, c) / tokens(c)) * log(k / df(t)) with df(t) the
    number of clusters containing t.  Ties break lexicographically.
    """
    k = len(texts_per_cluster)
    if k == 0:
        raise ArgumentError("no clusters given")
    counts = [Counter() for _ in range(k)]
    for c, texts in enumerate(texts_per_cluster):
        for text in texts:
            counts[c].update(tokenize(text))
    df = Counter()
    for counter in counts:
        df.update(counter.keys())

    result: list[list[tuple[str, float]]] = []
    for c, counter in enumerate(counts):
        total = sum(counter.values())
        if total == 0:
            warnings.warn(f"cluster {c} has no tokens after tokenization")
            result.append([])
            continue
        scored = [
            (word, (count / total) * log(k / df[word]))
            for word, count in counter.items()
        ]
        scored.sort(key=lambda ws: (-ws[1], ws[0]))
        result.append(scored[:n_words])
    return result


def cluster_name(index: int, words: Sequence[tuple[str, float]]) -> str:
    """Index-prefixed name from the top-3 words, e.g. ``2_ocean_sea_flood``."""
    return "_".join([str(index)] + [w for w, _ in words[:3]])


def tag_cross_cluster(
    pairs: Sequence[LabeledPair],
    assignments: Mapping[str, int],
    image_owner: Mapping[str, str],
) -> list[str]:
    """Tag each falsified pair as within- or cross-cluster.

    A pair is ``cross`` when its caption and the caption owning the
    swapped-in image live in different clusters; pristine pairs get ``n/a``.
    ``image_owner`` maps image_id to the id of the sample that owns it.
    """
    tags: list[str] = []
    for p in pairs:
        if p.label == LABEL_PRISTINE:
            tags.append(TAG_NA)
            continue
        try:
            own_cluster = assignments[p.caption_id]
        except KeyError:
            raise MissingIdError(f"caption {p.caption_id!r} has no cluster assignment") from None
        try:
            owner = image_owner[p.image_id]
        except KeyError:
            raise MissingIdError(f"image {p.image_id!r} has no owning sample") from None
        try:
            other_cluster = assignments[owner]
        except KeyError:
            raise MissingIdError(f"caption {owner!r} has no cluster assignment") from None
        tags.append(TAG_CROSS if own_cluster != other_cluster else TAG_WITHIN)
    return tags


def cross_cluster_stats(
    pairs: Sequence[LabeledPair],
    tags: Sequence[str],
    topic_of: Mapping[str, str],
) -> dict[str, dict[str, dict[str, float]]]:
    """Per topic and method: total pairs, cross-cluster count and percentage."""
    stats: dict[str, dict[str, dict[str, float]]] = {}
    for p, tag in zip(pairs, tags):
        if tag == TAG_NA:
            continue
        topic = topic_of.get(p.caption_id, "unknown")
        cell = stats.setdefault(topic, {}).setdefault(
            p.method, {"total": 0, "cross_cluster": 0}
        )
        cell["total"] += 1
        if tag == TAG_CROSS:
            cell["cross_cluster"] += 1
    for topic in stats.values():
        for cell in topic.values():
            cell["pct_cross_cluster"] = 100.0 * cell["cross_cluster"] / cell["total"]
    return stats


def save_assignments(model: ClusterModel, path: str | Path, offset: int = 0) -> None:
    """JSON-lines of {id, cluster}, cluster indices shifted by ``offset``."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for sid in model.assignments:
            fh.write(json.dumps({"id": sid, "cluster": model.assignments[sid] + offset}) + "\n")


def load_assignments(path: str | Path) -> dict[str, int]:
    out: dict[str, int] = {}
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            out[obj["id"]] = int(obj["cluster"])
    return out
