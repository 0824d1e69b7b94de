import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ooc.errors import (
    AlignmentError,
    DegenerateInputError,
    FormatError,
    MissingIdError,
    ValidationError,
)
from ooc.store import (
    EMB1_MAGIC,
    EmbeddingMatrix,
    OcrRecord,
    SampleRecord,
    load_manifest,
    load_matrix,
    load_ocr,
    save_manifest,
    save_matrix,
    save_ocr,
)


def write_emb1(path, n, d, floats, ids):
    path.write_bytes(EMB1_MAGIC + struct.pack("<II", n, d) + np.asarray(floats, dtype="<f4").tobytes())
    path.with_suffix(".ids").write_text("".join(i + "\n" for i in ids))


class TestLoadMatrix:
    def test_identity_like_rows(self, tmp_path):
        f = tmp_path / "m.emb"
        write_emb1(f, 2, 3, [1, 0, 0, 0, 1, 0], ["a", "b"])
        m = load_matrix(f)
        assert m.n == 2 and m.d == 3
        assert m.ids == ("a", "b")
        np.testing.assert_array_equal(m.values, [[1, 0, 0], [0, 1, 0]])

    def test_id_count_mismatch(self, tmp_path):
        f = tmp_path / "m.emb"
        write_emb1(f, 2, 3, [1, 0, 0, 0, 1, 0], ["a", "b", "c"])
        with pytest.raises(AlignmentError):
            load_matrix(f)

    def test_bad_magic(self, tmp_path):
        f = tmp_path / "m.emb"
        f.write_bytes(b"NOPE" + struct.pack("<II", 0, 0))
        f.with_suffix(".ids").write_text("")
        with pytest.raises(FormatError):
            load_matrix(f)

    def test_truncated(self, tmp_path):
        f = tmp_path / "m.emb"
        write_emb1(f, 2, 3, [1, 0, 0, 0, 1, 0], ["a", "b"])
        f.write_bytes(f.read_bytes()[:-4])
        with pytest.raises(FormatError):
            load_matrix(f)

    def test_nan_rejected(self, tmp_path):
        f = tmp_path / "m.emb"
        write_emb1(f, 1, 2, [1.0, float("nan")], ["a"])
        with pytest.raises(ValidationError):
            load_matrix(f)

    def test_duplicate_ids_rejected(self, tmp_path):
        f = tmp_path / "m.emb"
        write_emb1(f, 2, 1, [1.0, 2.0], ["a", "a"])
        with pytest.raises(ValidationError):
            load_matrix(f)

    def test_round_trip_byte_identical(self, tmp_path):
        rng = np.random.default_rng(7)
        m = EmbeddingMatrix(
            tuple(f"id{i}" for i in range(13)),
            rng.standard_normal((13, 5)).astype(np.float32),
        )
        f1, f2 = tmp_path / "a.emb", tmp_path / "b.emb"
        save_matrix(m, f1)
        save_matrix(load_matrix(f1), f2)
        assert f1.read_bytes() == f2.read_bytes()
        assert f1.with_suffix(".ids").read_bytes() == f2.with_suffix(".ids").read_bytes()


class TestNormalize:
    def test_hand_computed(self):
        m = EmbeddingMatrix(("a",), np.array([[3.0, 4.0]], dtype=np.float32))
        np.testing.assert_allclose(m.normalize().values, [[0.6, 0.8]], rtol=1e-6)

    def test_idempotent_on_unit_row(self):
        m = EmbeddingMatrix(("a",), np.array([[1.0, 0.0]], dtype=np.float32))
        np.testing.assert_array_equal(m.normalize().values, [[1.0, 0.0]])

    def test_zero_row_rejected_naming_id(self):
        m = EmbeddingMatrix(("good", "nil"), np.array([[1, 1], [0, 0]], dtype=np.float32))
        with pytest.raises(DegenerateInputError, match="nil"):
            m.normalize()

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_norms_and_idempotence(self, seed):
        rng = np.random.default_rng(seed)
        m = EmbeddingMatrix(
            tuple(f"r{i}" for i in range(8)),
            (rng.standard_normal((8, 6)) * rng.uniform(0.1, 50)).astype(np.float32),
        )
        normed = m.normalize()
        norms = np.linalg.norm(normed.values.astype(np.float64), axis=1)
        assert np.all(np.abs(norms - 1.0) < 1e-5)
        again = normed.normalize()
        assert np.max(np.abs(again.values - normed.values)) < 1e-6

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_normalize_preserves_argmax_dot(self, seed):
        rng = np.random.default_rng(seed)
        raw = rng.standard_normal((10, 4)) * rng.uniform(0.5, 20.0, size=(10, 1))
        m = EmbeddingMatrix(tuple(f"r{i}" for i in range(10)), raw.astype(np.float32))
        q = rng.standard_normal(4)
        q /= np.linalg.norm(q)
        normed = m.normalize()
        # Scaling rows never changes which row is most similar to a unit query.
        before = np.argmax(normed.values.astype(np.float64) @ q)
        scaled = EmbeddingMatrix(m.ids, (raw * 3.5).astype(np.float32)).normalize()
        after = np.argmax(scaled.values.astype(np.float64) @ q)
        assert before == after


class TestLookup:
    def test_first_id_is_row_zero(self, small_matrix):
        np.testing.assert_array_equal(small_matrix.lookup("a"), [1, 0, 0])

    def test_unknown_id(self, small_matrix):
        with pytest.raises(MissingIdError):
            small_matrix.lookup("zzz")

    def test_agrees_with_linear_scan(self):
        rng = np.random.default_rng(3)
        ids = tuple(f"id{i}" for i in range(50))
        m = EmbeddingMatrix(ids, rng.standard_normal((50, 4)).astype(np.float32))
        for sid in ids:
            scan_row = next(i for i, other in enumerate(m.ids) if other == sid)
            np.testing.assert_array_equal(m.lookup(sid), m.values[scan_row])

    def test_values_read_only(self, small_matrix):
        with pytest.raises(ValueError):
            small_matrix.values[0, 0] = 5.0


class TestManifest:
    def test_round_trip(self, tmp_path):
        records = [
            SampleRecord("s1", "climate", "flood photo", "m1", "train"),
            SampleRecord("s2", "covid", "vaccine news", "m2", "dev"),
        ]
        p = tmp_path / "manifest.jsonl"
        save_manifest(records, p)
        assert load_manifest(p) == records

    def test_bad_topic_with_line_context(self, tmp_path):
        p = tmp_path / "manifest.jsonl"
        p.write_text('{"id":"a","topic":"sports","text":"x","image_id":"m","split":"train"}\n')
        with pytest.raises(ValidationError, match=r"manifest\.jsonl:1"):
            load_manifest(p)

    def test_duplicate_id(self, tmp_path):
        p = tmp_path / "manifest.jsonl"
        rec = '{"id":"a","topic":"covid","text":"x","image_id":"m","split":"train"}\n'
        p.write_text(rec + rec)
        with pytest.raises(ValidationError, match="duplicate"):
            load_manifest(p)

    def test_empty_text_rejected(self, tmp_path):
        p = tmp_path / "manifest.jsonl"
        p.write_text('{"id":"a","topic":"covid","text":"","image_id":"m","split":"train"}\n')
        with pytest.raises(ValidationError):
            load_manifest(p)


class TestOcr:
    def test_round_trip(self, tmp_path):
        records = [OcrRecord("m1", 100, 80, ((0, 0, 10, 10), (5, 5, 60, 40)))]
        p = tmp_path / "ocr.jsonl"
        save_ocr(records, p)
        assert load_ocr(p) == records

    @pytest.mark.parametrize("box", [(0, 0, 0, 10), (-1, 0, 5, 5), (0, 0, 101, 10), (5, 5, 5, 9)])
    def test_bad_boxes(self, box):
        with pytest.raises(ValidationError):
            OcrRecord("m", 100, 80, (box,))
