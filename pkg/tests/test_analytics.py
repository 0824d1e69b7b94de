import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ooc.analytics import (
    STOPWORDS,
    bucket,
    cluster_name,
    cluster_texts,
    cluster_top_words,
    clustering_objective,
    ocr_coverage,
    tag_cross_cluster,
    tokenize,
    union_area,
)
from ooc.errors import ArgumentError, MissingIdError
from ooc.mismatch import LabeledPair
from ooc.store import EmbeddingMatrix, OcrRecord
from oracles import raster_union_area


def random_boxes(rng, max_side=512, max_boxes=8):
    w = int(rng.integers(1, max_side + 1))
    h = int(rng.integers(1, max_side + 1))
    boxes = []
    for _ in range(int(rng.integers(0, max_boxes + 1))):
        x1 = int(rng.integers(0, w))
        x2 = int(rng.integers(x1 + 1, w + 1))
        y1 = int(rng.integers(0, h))
        y2 = int(rng.integers(y1 + 1, h + 1))
        boxes.append((x1, y1, x2, y2))
    return w, h, boxes


class TestUnionArea:
    def test_no_boxes(self):
        assert ocr_coverage(OcrRecord("m", 100, 100, ())) == 0.0

    def test_full_image_box(self):
        assert ocr_coverage(OcrRecord("m", 100, 100, ((0, 0, 100, 100),))) == 1.0

    def test_inclusion_exclusion_example(self):
        rec = OcrRecord("m", 100, 100, ((0, 0, 60, 50), (40, 0, 100, 50)))
        assert ocr_coverage(rec) == pytest.approx(0.5)
        assert union_area(rec.boxes) == 5000

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=60, deadline=None)
    def test_matches_rasterization_exactly(self, seed):
        rng = np.random.default_rng(seed)
        w, h, boxes = random_boxes(rng, max_side=64)
        assert union_area(boxes) == raster_union_area(boxes, w, h)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=60, deadline=None)
    def test_bounds(self, seed):
        rng = np.random.default_rng(seed)
        w, h, boxes = random_boxes(rng, max_side=128)
        area = union_area(boxes)
        if boxes:
            singles = [(b[2] - b[0]) * (b[3] - b[1]) for b in boxes]
            assert max(singles) <= area <= min(sum(singles), w * h)
        else:
            assert area == 0


class TestBucket:
    @pytest.mark.parametrize(
        "cov,expected",
        [(0.0, "zero"), (1e-9, "low"), (0.10, "low"), (0.1000001, "mid"),
         (0.37, "mid"), (0.50, "mid"), (0.51, "high"), (1.0, "high")],
    )
    def test_edges(self, cov, expected):
        assert bucket(cov) == expected

    def test_exact_tenth_from_integer_division(self):
        rec = OcrRecord("m", 100, 100, ((0, 0, 10, 100),))
        assert bucket(ocr_coverage(rec)) == "low"

    @pytest.mark.parametrize("bad", [-0.1, 1.00001])
    def test_out_of_range(self, bad):
        with pytest.raises(ArgumentError):
            bucket(bad)

    @given(st.floats(0.0, 1.0, allow_nan=False))
    def test_total_on_unit_interval(self, cov):
        assert bucket(cov) in ("zero", "low", "mid", "high")


def planted_blobs(rng, centers, per_blob, max_angle_deg=10.0):
    """Points within max_angle of their blob center, ids carry the truth."""
    rows, ids, truth = [], [], []
    for b, center in enumerate(centers):
        for i in range(per_blob):
            perp = rng.standard_normal(center.shape[0])
            perp -= perp.dot(center) * center
            perp /= np.linalg.norm(perp)
            angle = np.deg2rad(rng.uniform(0.0, max_angle_deg))
            rows.append(np.cos(angle) * center + np.sin(angle) * perp)
            ids.append(f"b{b}p{i:03d}")
            truth.append(b)
    return EmbeddingMatrix(tuple(ids), np.array(rows, dtype=np.float32)), truth


def recovered_exactly(model, ids, truth):
    mapping = {}
    for sid, want in zip(ids, truth):
        got = model.assignments[sid]
        if mapping.setdefault(want, got) != got:
            return False
    return len(set(mapping.values())) == len(mapping)


class TestClusterTexts:
    def test_antipodal_blobs_recovered(self):
        rng = np.random.default_rng(0)
        c = rng.standard_normal(16)
        c /= np.linalg.norm(c)
        m, truth = planted_blobs(rng, [c, -c], per_blob=40)
        model = cluster_texts(m, k=2, seed=1)
        assert recovered_exactly(model, m.ids, truth)

    def test_three_orthogonal_blobs_recovered(self):
        rng = np.random.default_rng(1)
        centers = np.linalg.qr(rng.standard_normal((16, 3)))[0].T
        m, truth = planted_blobs(rng, list(centers), per_blob=30)
        model = cluster_texts(m, k=3, seed=2)
        assert recovered_exactly(model, m.ids, truth)

    def test_k_equals_n_zero_distortion(self):
        rng = np.random.default_rng(2)
        rows = rng.standard_normal((6, 8))
        rows /= np.linalg.norm(rows, axis=1, keepdims=True)
        m = EmbeddingMatrix(tuple(f"p{i}" for i in range(6)), rows.astype(np.float32))
        model = cluster_texts(m, k=6, seed=0)
        assert len(set(model.assignments.values())) == 6
        assert clustering_objective(m, model) == pytest.approx(0.0, abs=1e-9)

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(3)
        rows = rng.standard_normal((40, 8))
        rows /= np.linalg.norm(rows, axis=1, keepdims=True)
        m = EmbeddingMatrix(tuple(f"p{i}" for i in range(40)), rows.astype(np.float32))
        a = cluster_texts(m, k=5, seed=11)
        b = cluster_texts(m, k=5, seed=11)
        assert a.assignments == b.assignments
        np.testing.assert_array_equal(a.centroids, b.centroids)

    def test_k_larger_than_n_rejected(self):
        m = EmbeddingMatrix(("a", "b"), np.eye(2, dtype=np.float32))
        with pytest.raises(ArgumentError):
            cluster_texts(m, k=3, seed=0)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=20, deadline=None)
    def test_objective_non_increasing_and_unit_centroids(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(8, 60))
        rows = rng.standard_normal((n, 6))
        rows /= np.linalg.norm(rows, axis=1, keepdims=True)
        m = EmbeddingMatrix(tuple(f"p{i}" for i in range(n)), rows.astype(np.float32))
        model = cluster_texts(m, k=min(4, n), seed=seed)
        trace = model.objective_trace
        assert all(b <= a + 1e-9 for a, b in zip(trace, trace[1:]))
        np.testing.assert_allclose(np.linalg.norm(model.centroids, axis=1), 1.0, atol=1e-9)
        assert set(model.assignments.values()) == set(range(model.k))


class TestTopWords:
    def test_word_in_every_cluster_scores_zero(self):
        words = cluster_top_words([["flood common"], ["vaccine common"]])
        scores = {w: s for cluster in words for w, s in cluster}
        assert scores["common"] == 0.0

    def test_hand_computed_tf_idf(self):
        words = cluster_top_words([["flood flood storm"], ["vaccine"]])
        top_word, top_score = words[0][0]
        assert top_word == "flood"
        assert top_score == pytest.approx((2 / 3) * np.log(2))

    def test_name_format(self):
        words = [("ocean", 0.04), ("sea", 0.03), ("flood", 0.02), ("reef", 0.01)]
        assert cluster_name(2, words) == "2_ocean_sea_flood"

    def test_empty_cluster_warns(self):
        with pytest.warns(UserWarning, match="no tokens"):
            words = cluster_top_words([["the a of"], ["flood"]])
        assert words[0] == []

    def test_at_most_ten_words_sorted(self):
        text = " ".join(f"word{i:02d}" for i in range(15) for _ in range(15 - i))
        words = cluster_top_words([[text], ["other vocab"]])
        assert len(words[0]) == 10
        scores = [s for _, s in words[0]]
        assert scores == sorted(scores, reverse=True)

    def test_tokenizer_rules(self):
        assert tokenize("#Flood hits COVID_19 zone! a I x") == ["flood", "hits", "covid", "19", "zone"]
        assert "the" in STOPWORDS and len(STOPWORDS) >= 100


class TestCrossClusterTags:
    def _pairs(self):
        return [
            LabeledPair("b0p000", "img-b0p001", "falsified", "hard"),
            LabeledPair("b0p000", "img-b1p000", "falsified", "random"),
            LabeledPair("b0p000", "img-b0p000", "pristine", "none"),
        ]

    def test_tags(self):
        assignments = {"b0p000": 0, "b0p001": 0, "b1p000": 1}
        owner = {"img-b0p000": "b0p000", "img-b0p001": "b0p001", "img-b1p000": "b1p000"}
        tags = tag_cross_cluster(self._pairs(), assignments, owner)
        assert tags == ["within", "cross", "n/a"]

    def test_missing_assignment(self):
        owner = {"img-b0p001": "b0p001", "img-b1p000": "b1p000", "img-b0p000": "b0p000"}
        with pytest.raises(MissingIdError):
            tag_cross_cluster(self._pairs(), {"b0p000": 0, "b0p001": 0}, owner)

    def test_missing_owner(self):
        assignments = {"b0p000": 0, "b0p001": 0, "b1p000": 1}
        with pytest.raises(MissingIdError):
            tag_cross_cluster(self._pairs(), assignments, {})
