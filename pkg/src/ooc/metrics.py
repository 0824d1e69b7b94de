"""ROC construction and threshold metrics for falsified-pair detection.

Falsified is the positive class throughout: pD (probability of detection) is
the true-positive rate over falsified pairs, FAR (false alarm rate) the
false-positive rate over pristine pairs.  Conventions, both oracle-tested:

* pD@FAR uses the conservative step convention — the best tpr among realized
  operating points with fpr <= the budget — because false-alarm budgets are
  hard constraints in forensic settings.
* EER interpolates linearly between the two curve points bracketing the
  fpr = fnr sign change, because the crossing is a rate equation; when a
  realized point hits it exactly, no interpolation happens.

Metrics depend only on score ranks, so any strictly monotone transform of
the scores leaves them unchanged.
"""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import ArgumentError, FormatError, UndefinedMetricError, ValidationError
from .mismatch import LABEL_FALSIFIED, LABEL_PRISTINE, LABELS


@dataclass(frozen=True)
class RocCurve:
    """Operating points sorted by descending threshold.

    ``thresholds[0]`` is a sentinel above the maximum score, so the curve
    starts at (fpr 0, tpr 0) and ends at (1, 1).  Tied scores share one point.
    """

    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    n_pos: int
    n_neg: int

    def points(self) -> list[tuple[float, float, float]]:
        return [
            (float(t), float(f), float(d))
            for t, f, d in zip(self.thresholds, self.fpr, self.tpr)
        ]


@dataclass(frozen=True)
class MetricsSummary:
    pd_at_far01: float
    pd_at_eer: float
    acc_at_eer: float
    eer: float
    eer_threshold: float
    n_pos: int
    n_neg: int

    def to_dict(self) -> dict:
        return {
            "pd_at_far01": self.pd_at_far01,
            "pd_at_eer": self.pd_at_eer,
            "acc_at_eer": self.acc_at_eer,
            "eer": self.eer,
            "eer_threshold": self.eer_threshold,
            "n_pos": self.n_pos,
            "n_neg": self.n_neg,
        }


def _as_positive_mask(labels: Sequence[str]) -> np.ndarray:
    mask = np.empty(len(labels), dtype=bool)
    for i, lab in enumerate(labels):
        if lab not in LABELS:
            raise ValidationError(f"unknown label {lab!r} (expected one of {LABELS})")
        mask[i] = lab == LABEL_FALSIFIED
    return mask


def roc(scores: Sequence[float], labels: Sequence[str]) -> RocCurve:
    """ROC curve from score/label pairs, built from the definition.

    Thresholds are the distinct score values plus a sentinel above the
    maximum; the point for threshold t has tpr = fraction of falsified with
    score >= t and fpr = fraction of pristine with score >= t.
    """
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1 or len(s) != len(labels):
        raise ArgumentError(
            f"scores and labels must be 1-D and aligned, got {s.shape} vs {len(labels)}"
        )
    if s.size == 0:
        raise ArgumentError("empty score list")
    if not np.all(np.isfinite(s)):
        raise ArgumentError("scores must be finite")
    pos = _as_positive_mask(labels)
    n_pos = int(pos.sum())
    n_neg = int(len(labels) - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(
            f"ROC undefined with {n_pos} falsified / {n_neg} pristine"
        )

    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    pos_sorted = pos[order].astype(np.float64)
    # Last index of every run of equal scores: ties collapse to one point.
    boundary = np.flatnonzero(np.diff(s_sorted) != 0.0)
    last = np.concatenate([boundary, [s.size - 1]])
    tps = np.cumsum(pos_sorted)[last]
    fps = np.cumsum(1.0 - pos_sorted)[last]

    thresholds = np.concatenate([[s_sorted[0] + 1.0], s_sorted[last]])
    tpr = np.concatenate([[0.0], tps / n_pos])
    fpr = np.concatenate([[0.0], fps / n_neg])
    return RocCurve(thresholds=thresholds, fpr=fpr, tpr=tpr, n_pos=n_pos, n_neg=n_neg)


def eer(curve: RocCurve) -> tuple[float, float]:
    """Equal error rate and its threshold.

    Returns the realized point when some threshold gives fpr == fnr exactly;
    otherwise interpolates linearly between the bracketing points.
    """
    tpr_star, fpr_star, threshold = _interp_point(curve)
    return (fpr_star + (1.0 - tpr_star)) / 2.0, threshold


def _interp_point(curve: RocCurve) -> tuple[float, float, float]:
    """(tpr, fpr, threshold) at the EER operating point."""
    fnr = 1.0 - curve.tpr
    g = curve.fpr - fnr  # non-decreasing along the curve, from -1 to +1
    idx = int(np.argmax(g >= 0.0))
    if g[idx] == 0.0:
        return float(curve.tpr[idx]), float(curve.fpr[idx]), float(curve.thresholds[idx])
    f0, f1 = curve.fpr[idx - 1], curve.fpr[idx]
    m0, m1 = fnr[idx - 1], fnr[idx]
    alpha = (m0 - f0) / ((f1 - f0) + (m0 - m1))
    tpr = curve.tpr[idx - 1] + alpha * (curve.tpr[idx] - curve.tpr[idx - 1])
    fpr = f0 + alpha * (f1 - f0)
    threshold = curve.thresholds[idx - 1] + alpha * (
        curve.thresholds[idx] - curve.thresholds[idx - 1]
    )
    return float(tpr), float(fpr), float(threshold)


def pd_at_far(curve: RocCurve, far: float) -> float:
    """Best detection rate within a false-alarm budget (step convention)."""
    if not 0.0 < far < 1.0:
        raise ArgumentError(f"far must be in (0, 1), got {far}")
    eligible = curve.fpr <= far
    return float(curve.tpr[eligible].max())


def summarize(scores: Sequence[float], labels: Sequence[str]) -> MetricsSummary:
    """All threshold metrics in one pass: pD@0.1FAR, pD@EER, Acc@EER."""
    curve = roc(scores, labels)
    tpr_star, fpr_star, threshold = _interp_point(curve)
    rate = (fpr_star + (1.0 - tpr_star)) / 2.0  # == fpr == fnr at the crossing
    return MetricsSummary(
        pd_at_far01=pd_at_far(curve, 0.1),
        pd_at_eer=tpr_star,
        acc_at_eer=(tpr_star + (1.0 - fpr_star)) / 2.0,
        eer=rate,
        eer_threshold=threshold,
        n_pos=curve.n_pos,
        n_neg=curve.n_neg,
    )


@dataclass(frozen=True)
class ScoredPair:
    caption_id: str
    image_id: str
    score: float
    label: str


@dataclass
class BreakoutReport:
    groups: dict[str, MetricsSummary]
    sizes: dict[str, int]
    skipped: list[str]

    def to_dict(self) -> dict:
        return {
            "groups": {
                name: dict(self.groups[name].to_dict(), n=self.sizes[name])
                for name in self.groups
            },
            "skipped": sorted(self.skipped),
        }


def grouped_summaries(
    predictions: Sequence[ScoredPair],
    key_fn: Callable[[ScoredPair], str | None],
) -> BreakoutReport:
    """Per-group summaries; pairs mapping to None are left out, groups with a
    single class are skipped with a warning."""
    if not predictions:
        raise ArgumentError("no predictions to break out")
    buckets: dict[str, list[ScoredPair]] = {}
    for sp in predictions:
        key = key_fn(sp)
        if key is None:
            continue
        buckets.setdefault(key, []).append(sp)
    groups: dict[str, MetricsSummary] = {}
    sizes: dict[str, int] = {}
    skipped: list[str] = []
    for name in sorted(buckets):
        subset = buckets[name]
        labels = [sp.label for sp in subset]
        if len(set(labels)) < 2:
            warnings.warn(f"breakout group {name!r} has a single class; skipped")
            skipped.append(name)
            continue
        groups[name] = summarize([sp.score for sp in subset], labels)
        sizes[name] = len(subset)
    return BreakoutReport(groups=groups, sizes=sizes, skipped=skipped)


def breakout(
    predictions: Sequence[ScoredPair],
    grouping: Mapping[str, str],
) -> BreakoutReport:
    """Group scored pairs by their caption's group label and summarize each.

    Captions absent from ``grouping`` are left out of every group.
    """
    return grouped_summaries(predictions, lambda sp: grouping.get(sp.caption_id))


def write_predictions(predictions: Iterable[ScoredPair], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["caption_id", "image_id", "score", "label"])
        for sp in predictions:
            writer.writerow([sp.caption_id, sp.image_id, repr(sp.score), sp.label])


def load_predictions(path: str | Path) -> list[ScoredPair]:
    path = Path(path)
    out: list[ScoredPair] = []
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["caption_id", "image_id", "score", "label"]:
            raise FormatError(f"{path}: unexpected header {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise FormatError(f"{path}:{lineno}: expected 4 columns, got {len(row)}")
            cap, img, score, label = row
            if label not in LABELS:
                raise ValidationError(f"{path}:{lineno}: unknown label {label!r}")
            try:
                out.append(ScoredPair(cap, img, float(score), label))
            except ValueError:
                raise FormatError(f"{path}:{lineno}: bad score {score!r}") from None
    return out


def write_roc_csv(curve: RocCurve, path: str | Path) -> None:
    """Dump (threshold, fpr, tpr) rows for external plotting."""
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "fpr", "tpr"])
        for t, f, d in curve.points():
            writer.writerow([repr(t), repr(f), repr(d)])


def write_report(report: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def flatten_report_csv(report: dict, path: str | Path) -> None:
    """Optional CSV flattening of a nested breakout report."""
    rows: list[tuple[str, str, dict]] = []

    def walk(prefix: str, node: dict) -> None:
        if "acc_at_eer" in node:
            rows.append((prefix, "", node))
            return
        for key in sorted(node):
            child = node[key]
            if isinstance(child, dict):
                walk(f"{prefix}/{key}" if prefix else key, child)

    walk("", report)
    fields = ["pd_at_far01", "pd_at_eer", "acc_at_eer", "eer", "n_pos", "n_neg"]
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["group"] + fields)
        for prefix, _, node in rows:
            writer.writerow([prefix] + [node.get(f, "") for f in fields])
