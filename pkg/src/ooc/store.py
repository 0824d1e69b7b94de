"""Embedding matrices, sample manifests, and OCR records, with their on-disk formats.

Formats owned by this module and shared by every other component:

* EMB1 embeddings: magic bytes ``b"EMB1"``, then ``n`` and ``d`` as
  little-endian uint32, then ``n * d`` little-endian float32 values,
  row-major.  A companion ids file (same stem, ``.ids`` suffix) holds one
  UTF-8 id per line; line ``i`` labels row ``i``.  Row order is the id
  alignment contract: nothing is sorted on load.
* Manifest: JSON lines, one record per line with keys
  ``id, topic, text, image_id, split``.
* OCR detections: JSON lines with keys ``image_id, width, height, boxes``
  where ``boxes`` is a list of ``[x1, y1, x2, y2]`` integer pixel rectangles.

Matrices are immutable after load (the value buffer is marked read-only), so
they are safe to share across worker threads.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    AlignmentError,
    DegenerateInputError,
    FormatError,
    MissingIdError,
    ValidationError,
)

EMB1_MAGIC = b"EMB1"

TOPICS = ("climate", "covid", "military")
SPLITS = ("train", "dev", "test")


def ids_path_for(path: str | Path) -> Path:
    """Companion ids file for an EMB1 file: same stem, ``.ids`` suffix."""
    return Path(path).with_suffix(".ids")


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Dense row-major float32 matrix whose rows are keyed by sample id.

    ``ids[i]`` labels ``values[i]``.  Ids are unique, every value is finite,
    and the buffer is read-only; violations raise at construction time.
    """

    ids: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        ids = tuple(self.ids)
        values = np.ascontiguousarray(self.values, dtype=np.float32)
        if values.ndim != 2:
            raise ValidationError(f"embedding values must be 2-D, got shape {values.shape}")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "values", values)
        if len(ids) != values.shape[0]:
            raise AlignmentError(
                f"{len(ids)} ids for {values.shape[0]} embedding rows"
            )
        bad = np.argwhere(~np.isfinite(values))
        if bad.size:
            row = int(bad[0, 0])
            raise ValidationError(f"non-finite value in row for id {ids[row]!r}")
        index: dict[str, int] = {}
        for row, sid in enumerate(ids):
            if not sid:
                raise ValidationError(f"empty id at row {row}")
            if sid in index:
                raise ValidationError(f"duplicate id {sid!r}")
            index[sid] = row
        object.__setattr__(self, "_index", index)
        values.setflags(write=False)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def row_of(self, sample_id: str) -> int:
        try:
            return self._index[sample_id]
        except KeyError:
            raise MissingIdError(f"unknown id {sample_id!r}") from None

    def lookup(self, sample_id: str) -> np.ndarray:
        """Row for ``sample_id`` (read-only view), O(1) via the id index."""
        return self.values[self.row_of(sample_id)]

    def subset(self, ids: Sequence[str]) -> "EmbeddingMatrix":
        """New matrix restricted to ``ids``, rows in the given order."""
        rows = [self.row_of(sid) for sid in ids]
        return EmbeddingMatrix(tuple(ids), self.values[rows].copy())

    def normalize(self) -> "EmbeddingMatrix":
        """Divide every row by its L2 norm (accumulated in float64).

        All-zero rows signal upstream extraction failure and are rejected
        rather than skipped.  Idempotent up to float32 rounding.
        """
        v64 = self.values.astype(np.float64)
        norms = np.sqrt(np.einsum("ij,ij->i", v64, v64))
        zero = np.flatnonzero(norms == 0.0)
        if zero.size:
            raise DegenerateInputError(
                f"cannot normalize all-zero row for id {self.ids[int(zero[0])]!r}"
            )
        return EmbeddingMatrix(self.ids, (v64 / norms[:, None]).astype(np.float32))


def load_matrix(path: str | Path) -> EmbeddingMatrix:
    """Read an EMB1 file plus its companion ids file.

    Values are bit-identical to the file contents.  Raises
    :class:`FormatError` for a bad magic or a size mismatch,
    :class:`AlignmentError` when the ids file does not have exactly ``n``
    lines, and :class:`ValidationError` for non-finite values or duplicate
    ids.
    """
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 12:
        raise FormatError(f"{path}: truncated EMB1 header ({len(raw)} bytes)")
    if raw[:4] != EMB1_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}, expected {EMB1_MAGIC!r}")
    n, d = struct.unpack("<II", raw[4:12])
    expected = 12 + 4 * n * d
    if len(raw) != expected:
        raise FormatError(
            f"{path}: expected {expected} bytes for n={n} d={d}, found {len(raw)}"
        )
    values = np.frombuffer(raw, dtype="<f4", offset=12).reshape(n, d)

    ids_path = ids_path_for(path)
    if not ids_path.exists():
        raise AlignmentError(f"{path}: companion ids file {ids_path} not found")
    text = ids_path.read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if len(lines) != n:
        raise AlignmentError(
            f"{ids_path}: {len(lines)} ids for {n} embedding rows"
        )
    return EmbeddingMatrix(tuple(lines), values.copy())


def save_matrix(matrix: EmbeddingMatrix, path: str | Path) -> None:
    """Write EMB1 + ids files; a save/load round trip is byte-identical."""
    path = Path(path)
    header = EMB1_MAGIC + struct.pack("<II", matrix.n, matrix.d)
    body = np.ascontiguousarray(matrix.values, dtype="<f4").tobytes()
    path.write_bytes(header + body)
    ids_path_for(path).write_text(
        "".join(sid + "\n" for sid in matrix.ids), encoding="utf-8"
    )


@dataclass(frozen=True)
class SampleRecord:
    """One tweet-like item: caption text plus the id of its own image."""

    id: str
    topic: str
    text: str
    image_id: str
    split: str


def _check_record(rec: SampleRecord, where: str) -> None:
    if not rec.id:
        raise ValidationError(f"{where}: empty id")
    if rec.topic not in TOPICS:
        raise ValidationError(f"{where}: unknown topic {rec.topic!r} (expected one of {TOPICS})")
    if rec.split not in SPLITS:
        raise ValidationError(f"{where}: unknown split {rec.split!r} (expected one of {SPLITS})")
    if not rec.text:
        raise ValidationError(f"{where}: empty text for id {rec.id!r}")
    if not rec.image_id:
        raise ValidationError(f"{where}: empty image_id for id {rec.id!r}")


def load_manifest(path: str | Path) -> list[SampleRecord]:
    path = Path(path)
    records: list[SampleRecord] = []
    seen: set[str] = set()
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
                rec = SampleRecord(
                    id=obj["id"], topic=obj["topic"], text=obj["text"],
                    image_id=obj["image_id"], split=obj["split"],
                )
            except KeyError as exc:
                raise FormatError(f"{where}: missing key {exc.args[0]!r}") from None
            _check_record(rec, where)
            if rec.id in seen:
                raise ValidationError(f"{where}: duplicate id {rec.id!r}")
            seen.add(rec.id)
            records.append(rec)
    return records


def save_manifest(records: Iterable[SampleRecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps({
                "id": rec.id, "topic": rec.topic, "text": rec.text,
                "image_id": rec.image_id, "split": rec.split,
            }) + "\n")


@dataclass(frozen=True)
class OcrRecord:
    """Ingested text detections for one image: pixel-space boxes."""

    image_id: str
    width: int
    height: int
    boxes: tuple[tuple[int, int, int, int], ...]

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValidationError(
                f"image {self.image_id!r}: non-positive size {self.width}x{self.height}"
            )
        boxes = tuple(tuple(int(v) for v in box) for box in self.boxes)
        object.__setattr__(self, "boxes", boxes)
        for box in boxes:
            if len(box) != 4:
                raise ValidationError(f"image {self.image_id!r}: box {box} is not 4 integers")
            x1, y1, x2, y2 = box
            if not (0 <= x1 < x2 <= self.width and 0 <= y1 < y2 <= self.height):
                raise ValidationError(
                    f"image {self.image_id!r}: box {box} outside {self.width}x{self.height} "
                    "or empty"
                )


def load_ocr(path: str | Path) -> list[OcrRecord]:
    path = Path(path)
    records: list[OcrRecord] = []
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
                rec = OcrRecord(
                    image_id=obj["image_id"], width=obj["width"],
                    height=obj["height"], boxes=tuple(map(tuple, obj["boxes"])),
                )
            except KeyError as exc:
                raise FormatError(f"{where}: missing key {exc.args[0]!r}") from None
            except ValidationError as exc:
                raise ValidationError(f"{where}: {exc}") from None
            records.append(rec)
    return records


def save_ocr(records: Iterable[OcrRecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps({
                "image_id": rec.image_id, "width": rec.width, "height": rec.height,
                "boxes": [list(b) for b in rec.boxes],
            }) + "\n")
