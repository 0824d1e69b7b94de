import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import unit_rows
from ooc.detector import (
    DetectorModel,
    TrainConfig,
    feature_width,
    fuse,
    init_model,
    load_model,
    loss_and_grads,
    pair_features,
    predict,
    save_model,
    score_features,
    train,
    train_on_features,
    zero_shot_score,
    zero_shot_scores,
)
from ooc.errors import ArgumentError, DivergenceError, MissingIdError
from ooc.mismatch import LabeledPair
from ooc.store import EmbeddingMatrix


class TestFuse:
    def test_multiply_orthogonal(self):
        np.testing.assert_array_equal(fuse([1, 0], [0, 1], "multiply"), [0.0, 0.0])

    def test_concat_dot_self_gives_unit_last(self):
        u = np.array([0.6, 0.8])
        out = fuse(u, u, "concat_dot")
        assert out.shape == (5,)
        assert out[-1] == pytest.approx(1.0)

    def test_multiply_sum_equals_dot(self):
        out = fuse([0.6, 0.8], [0.8, 0.6], "multiply")
        assert out.sum() == pytest.approx(0.96)

    def test_output_widths(self):
        assert feature_width("concat", 7) == 14
        assert feature_width("concat_dot", 7) == 15
        assert feature_width("multiply", 7) == 7

    def test_dimension_mismatch(self):
        with pytest.raises(ArgumentError):
            fuse([1, 0], [1, 0, 0], "concat")

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_multiply_symmetric(self, seed):
        rng = np.random.default_rng(seed)
        a, b = unit_rows(rng, 2, 9)
        np.testing.assert_array_equal(fuse(a, b, "multiply"), fuse(b, a, "multiply"))


class TestZeroShot:
    def test_identical_unit_vectors(self):
        assert zero_shot_score([0.6, 0.8], [0.6, 0.8]) == pytest.approx(1.0)

    def test_orthogonal(self):
        assert zero_shot_score([1, 0], [0, 1]) == 0.0

    def test_hand_computed(self):
        assert zero_shot_score([0.6, 0.8], [0.8, 0.6]) == pytest.approx(0.96)

    def test_mismatch(self):
        with pytest.raises(ArgumentError):
            zero_shot_score([1, 0, 0], [1, 0])


class TestInitModel:
    def test_deterministic(self):
        a = init_model(8, "multiply", 4, seed=3)
        b = init_model(8, "multiply", 4, seed=3)
        for name in ("w1", "b1", "w2", "b2"):
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))

    def test_paper_head_parameter_count(self):
        model = init_model(768, "multiply", 768, seed=0)
        assert model.parameter_count == 768 * 768 + 768 + 768 + 1 == 591_361

    def test_concat_shapes(self):
        model = init_model(4, "concat", 2, seed=0)
        assert model.w1.shape == (8, 2)

    def test_bounds_respect_fan_in(self):
        model = init_model(16, "multiply", 16, seed=1)
        assert np.max(np.abs(model.w1)) <= 1 / 4
        assert np.max(np.abs(model.w2)) <= 1 / 4


def synthetic_multiply_set(rng, n=100, d=16, noise=0.05):
    """Pristine image = text + small noise; falsified image = random."""
    u = unit_rows(rng, n, d)
    bump = unit_rows(rng, n, d)
    pristine_img = u + noise * bump
    pristine_img /= np.linalg.norm(pristine_img, axis=1, keepdims=True)
    v = unit_rows(rng, n, d)
    x = np.vstack([u * pristine_img, u * v])
    y = np.concatenate([np.zeros(n), np.ones(n)])
    return x, y


class TestGradients:
    @pytest.mark.parametrize("activation", ["relu", "identity"])
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_matches_central_differences(self, activation, seed):
        rng = np.random.default_rng(seed)
        model = init_model(8, "multiply", 4, seed=seed, activation=activation)
        x = rng.standard_normal((12, 8))
        y = (rng.random(12) < 0.5).astype(float)
        _, grads = loss_and_grads(model, x, y)
        step = 1e-4
        for name in ("w1", "b1", "w2", "b2"):
            arr = np.array(getattr(model, name))
            numeric = np.zeros_like(arr)
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                for sign in (+1, -1):
                    shifted = arr.copy()
                    shifted[idx] += sign * step
                    kwargs = {name: shifted}
                    probe = DetectorModel(
                        fusion=model.fusion, d=model.d, hidden_width=model.hidden_width,
                        seed=model.seed, activation=model.activation,
                        **{k: (kwargs.get(k, getattr(model, k))) for k in ("w1", "b1", "w2", "b2")},
                    )
                    loss, _ = loss_and_grads(probe, x, y)
                    numeric[idx] += sign * loss / (2 * step)
            denom = np.maximum(np.abs(numeric), 1e-8)
            rel = np.abs(grads[name] - numeric) / denom
            assert rel.max() < 1e-4


class TestTrain:
    def test_separable_set_reaches_95_accuracy(self):
        rng = np.random.default_rng(0)
        x, y = synthetic_multiply_set(rng)
        model = init_model(16, "multiply", 16, seed=1)
        cfg = TrainConfig(learning_rate=0.05, epochs=16, batch_size=32, seed=2)
        trained, trace = train_on_features(model, x, y, cfg)
        acc = np.mean((score_features(trained, x) >= 0.5) == y)
        assert acc >= 0.95
        assert trace[-1] < trace[0]

    def test_zero_learning_rate_is_identity(self):
        rng = np.random.default_rng(1)
        x, y = synthetic_multiply_set(rng, n=30)
        model = init_model(16, "multiply", 8, seed=0)
        trained, trace = train_on_features(
            model, x, y, TrainConfig(learning_rate=0.0, epochs=4, batch_size=16, seed=0)
        )
        for name in ("w1", "b1", "w2", "b2"):
            np.testing.assert_array_equal(getattr(trained, name), getattr(model, name))
        assert len(set(np.round(trace, 12))) == 1

    def test_bit_identical_given_seed(self):
        rng = np.random.default_rng(2)
        x, y = synthetic_multiply_set(rng, n=40)
        cfg = TrainConfig(learning_rate=0.02, epochs=5, batch_size=16, seed=7)
        runs = [
            train_on_features(init_model(16, "multiply", 8, seed=3), x, y, cfg)[0]
            for _ in range(2)
        ]
        for name in ("w1", "b1", "w2", "b2"):
            np.testing.assert_array_equal(getattr(runs[0], name), getattr(runs[1], name))

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_reports_epoch(self):
        rng = np.random.default_rng(3)
        x, y = synthetic_multiply_set(rng, n=40)
        model = init_model(16, "multiply", 8, seed=0)
        with pytest.raises(DivergenceError) as err:
            train_on_features(
                model, x, y,
                TrainConfig(learning_rate=1e300, epochs=3, batch_size=8, seed=0),
            )
        assert err.value.epoch >= 1

    def test_unresolvable_id(self):
        ids = ("a", "b")
        m = EmbeddingMatrix(ids, np.eye(2, dtype=np.float32))
        pairs = [LabeledPair("a", "ghost", "falsified", "random")]
        model = init_model(2, "multiply", 2, seed=0)
        with pytest.raises(MissingIdError):
            train(model, pairs, m, m, TrainConfig())

    def test_mode_other_than_head_only_rejected(self):
        with pytest.raises(ArgumentError):
            TrainConfig(mode="finetune")


class TestPredict:
    def _stores(self):
        rng = np.random.default_rng(0)
        texts = EmbeddingMatrix(("c1", "c2"), unit_rows(rng, 2, 4).astype(np.float32))
        imgs = EmbeddingMatrix(("m1", "m2"), unit_rows(rng, 2, 4).astype(np.float32))
        return imgs, texts

    def test_zero_weight_model_scores_half(self):
        imgs, texts = self._stores()
        zeros = DetectorModel(
            fusion="multiply", d=4, hidden_width=3, seed=0,
            w1=np.zeros((4, 3)), b1=np.zeros(3), w2=np.zeros((3, 1)), b2=np.zeros(1),
        )
        assert predict(zeros, "c1", "m1", imgs, texts) == 0.5

    def test_output_bias_strictly_increases_scores(self):
        imgs, texts = self._stores()
        base = init_model(4, "multiply", 3, seed=1)
        bumped = DetectorModel(
            fusion="multiply", d=4, hidden_width=3, seed=0,
            w1=base.w1, b1=base.b1, w2=base.w2, b2=base.b2 + 0.75,
        )
        for cid, mid in (("c1", "m1"), ("c2", "m2"), ("c1", "m2")):
            assert predict(bumped, cid, mid, imgs, texts) > predict(base, cid, mid, imgs, texts)

    def test_trained_model_orders_classes(self):
        rng = np.random.default_rng(4)
        x, y = synthetic_multiply_set(rng)
        model = init_model(16, "multiply", 16, seed=1)
        trained, _ = train_on_features(
            model, x, y, TrainConfig(learning_rate=0.05, epochs=16, batch_size=32, seed=2)
        )
        scores = score_features(trained, x)
        assert scores[y == 1].mean() > scores[y == 0].mean()

    def test_relu_monotone_for_nonnegative_weights_and_features(self):
        model = DetectorModel(
            fusion="multiply", d=3, hidden_width=2, seed=0,
            w1=np.array([[0.5, 0.2], [0.1, 0.4], [0.3, 0.3]]),
            b1=np.array([-0.1, 0.05]), w2=np.array([[0.7], [0.2]]), b2=np.array([0.0]),
        )
        feats = np.array([0.1, 0.2, 0.3])
        base = score_features(model, feats[None, :])[0]
        for i in range(3):
            bigger = feats.copy()
            bigger[i] += 0.2
            assert score_features(model, bigger[None, :])[0] >= base


class TestModelIO:
    def test_round_trip_exact(self, tmp_path):
        model = init_model(6, "concat_dot", 5, seed=9)
        p = tmp_path / "model.json"
        save_model(model, p)
        loaded = load_model(p)
        assert loaded.fusion == model.fusion and loaded.d == model.d
        assert loaded.hidden_width == model.hidden_width
        for name in ("w1", "b1", "w2", "b2"):
            np.testing.assert_array_equal(getattr(loaded, name), getattr(model, name))

    def test_retrain_reproduces_file_bytes(self, tmp_path):
        rng = np.random.default_rng(5)
        x, y = synthetic_multiply_set(rng, n=30)
        cfg = TrainConfig(learning_rate=0.01, epochs=3, batch_size=16, seed=1)
        files = []
        for run in range(2):
            model = init_model(16, "multiply", 8, seed=4)
            trained, _ = train_on_features(model, x, y, cfg)
            p = tmp_path / f"model{run}.json"
            save_model(trained, p)
            files.append(p.read_bytes())
        assert files[0] == files[1]


class TestPairPlumbing:
    def test_pair_features_and_zero_shot(self):
        texts = EmbeddingMatrix(("c1",), np.array([[0.6, 0.8]], dtype=np.float32))
        imgs = EmbeddingMatrix(("m1",), np.array([[0.8, 0.6]], dtype=np.float32))
        pairs = [LabeledPair("c1", "m1", "falsified", "random")]
        feats = pair_features(pairs, imgs, texts, "multiply")
        assert feats.sum() == pytest.approx(0.96, abs=1e-6)
        zs = zero_shot_scores(pairs, imgs, texts)
        assert zs[0] == pytest.approx(0.96, abs=1e-6)
