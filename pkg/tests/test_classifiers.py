"""Classifier families: attention math, training loop, early stopping."""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from eegaug import autodiff as ad
from eegaug.classifiers import (
    ARCHITECTURES,
    DilatedCnnClassifier,
    MlpClassifier,
    TransformerClassifier,
    attention,
    make_classifier,
    sinusoidal_positions,
)
from eegaug.dataset import INTERICTAL, PREICTAL, Segment
from oracles import fd_gradients

ALL = (MlpClassifier, DilatedCnnClassifier, TransformerClassifier)


def _toy(n=24, channels=4, length=64, offset=3.0, seed=0):
    """Linearly separable: the preictal half gets an offset on channel 0."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, channels, length))
    y = np.repeat([INTERICTAL, PREICTAL], n // 2)
    X[y == PREICTAL, 0, :] += offset
    return X, y


def _toy_segments(n=8, channels=2, length=32, seed=3):
    X, y = _toy(n, channels, length, seed=seed)
    return [Segment(data=X[i], label=int(y[i]), record_id="r",
                    start_s=float(i)) for i in range(n)]


class TestAttention:
    def test_single_key_returns_the_value_row(self):
        rng = np.random.default_rng(0)
        q, k, v = rng.normal(size=(1, 4)), rng.normal(size=(1, 4)), rng.normal(size=(1, 3))
        out = attention(q, k, v).data
        assert np.allclose(out, v, atol=1e-12)

    def test_identical_keys_average_the_values(self):
        rng = np.random.default_rng(1)
        q = rng.normal(size=(1, 5))
        k = np.tile(rng.normal(size=(1, 5)), (2, 1))
        v = rng.normal(size=(2, 3))
        out = attention(q, k, v).data
        assert np.allclose(out, v.mean(axis=0), atol=1e-12)

    def test_softmax_factor_rows_sum_to_one(self):
        rng = np.random.default_rng(2)
        q, k = rng.normal(size=(6, 4)), rng.normal(size=(5, 4))
        scores = (q @ k.T) / np.sqrt(4.0)
        weights = ad.softmax(ad.as_tensor(scores)).data
        assert np.abs(weights.sum(axis=1) - 1.0).max() < 1e-12

    def test_matches_direct_computation(self):
        rng = np.random.default_rng(3)
        q, k, v = rng.normal(size=(4, 6)), rng.normal(size=(5, 6)), rng.normal(size=(5, 2))
        scores = (q @ k.T) / np.sqrt(6.0)
        e = np.exp(scores - scores.max(axis=1, keepdims=True))
        expected = (e / e.sum(axis=1, keepdims=True)) @ v
        assert np.allclose(attention(q, k, v).data, expected, atol=1e-12)

    def test_shift_invariance_across_keys(self):
        # adding one vector to every key shifts each score row by a constant
        rng = np.random.default_rng(4)
        q, k, v = rng.normal(size=(3, 4)), rng.normal(size=(5, 4)), rng.normal(size=(5, 2))
        shift = rng.normal(size=(1, 4))
        base = attention(q, k, v).data
        shifted = attention(q, k + shift, v).data
        assert np.abs(base - shifted).max() < 1e-12

    def test_dimension_mismatches_rejected(self):
        with pytest.raises(ValueError, match="widths differ"):
            attention(np.zeros((2, 3)), np.zeros((2, 4)), np.zeros((2, 4)))
        with pytest.raises(ValueError, match="counts differ"):
            attention(np.zeros((2, 3)), np.zeros((4, 3)), np.zeros((2, 4)))
        with pytest.raises(ValueError, match="2-D"):
            attention(np.zeros(3), np.zeros((2, 3)), np.zeros((2, 3)))


class TestSinusoidalPositions:
    def test_first_position_alternates_zero_one(self):
        table = sinusoidal_positions(5, 8)
        assert table.shape == (5, 8)
        assert np.allclose(table[0], [0, 1, 0, 1, 0, 1, 0, 1], atol=1e-15)

    def test_positions_are_distinct(self):
        table = sinusoidal_positions(32, 16)
        gaps = np.abs(table[:, None, :] - table[None, :, :]).max(axis=-1)
        off_diagonal = gaps + np.eye(32)
        assert off_diagonal.min() > 1e-6

    def test_odd_width_rejected(self):
        with pytest.raises(ValueError, match="even"):
            sinusoidal_positions(4, 7)


class TestFreshModel:
    def test_zero_head_gives_half_probability(self):
        X, y = _toy(n=8, channels=2, length=32)
        for cls in ALL:
            clf = cls(epochs_max=1, lr=0.0).fit(X, y)
            proba = clf.predict_proba(X)
            assert (proba[:, 1] == 0.5).all()
            assert np.allclose(proba.sum(axis=1), 1.0)

    def test_unfitted_use_raises(self):
        X, _ = _toy(n=4)
        for cls in ALL:
            with pytest.raises(NotFittedError):
                cls().predict_proba(X)

    def test_probabilities_stay_in_range(self):
        X, y = _toy(n=12, channels=2, length=32)
        for cls in ALL:
            proba = cls(epochs_max=5).fit(X, y).predict_proba(X)
            assert (proba >= 0.0).all() and (proba <= 1.0).all()


class TestFit:
    def test_separable_toy_reaches_95_percent(self):
        X, y = _toy()
        for cls in ALL:
            clf = cls(epochs_max=50).fit(X, y)
            acc = (clf.predict(X) == y).mean()
            assert acc >= 0.95, f"{cls.__name__} reached only {acc}"

    def test_same_seed_gives_identical_history(self):
        X, y = _toy(n=12, channels=2, length=32)
        for cls in ALL:
            a = cls(epochs_max=8, seed=5).fit(X, y)
            b = cls(epochs_max=8, seed=5).fit(X, y)
            assert a.history_ == b.history_

    def test_frozen_metrics_halt_after_patience(self):
        # lr=0 freezes the model, so epoch 1 sets the bests and 5 stale
        # epochs follow
        X, y = _toy(n=8, channels=2, length=32)
        for cls in ALL:
            clf = cls(epochs_max=40, patience=5, lr=0.0).fit(X, y)
            assert clf.n_epochs_ == 6

    def test_stop_matches_replayed_patience_rule(self):
        X, y = _toy()
        for cls in ALL:
            clf = cls(epochs_max=50, patience=5).fit(X, y)
            best_sens = best_spec = -np.inf
            stale, stop_at = 0, None
            for row in clf.history_:
                sens, spec = row["val_sensitivity"], row["val_specificity"]
                if sens > best_sens or spec > best_spec:
                    best_sens, best_spec = max(best_sens, sens), max(best_spec, spec)
                    stale = 0
                else:
                    stale += 1
                    if stale >= 5:
                        stop_at = row["epoch"]
                        break
            expected = stop_at if stop_at is not None else 50
            assert clf.n_epochs_ == expected

    def test_best_checkpoint_restored(self):
        X, y = _toy()
        for cls in ALL:
            clf = cls(epochs_max=30, seed=1).fit(X, y)
            probs = clf.predict_proba(X)[:, 1]
            positive = probs > 0.5
            sens = positive[y == PREICTAL].mean()
            spec = (~positive[y == INTERICTAL]).mean()
            best = max(r["val_sensitivity"] + r["val_specificity"]
                       for r in clf.history_)
            assert abs((sens + spec) - best) < 1e-12

    def test_loss_non_increasing_full_batch_small_lr(self):
        X, y = _toy(n=16, channels=2, length=32, offset=0.8, seed=7)
        for cls in ALL:
            clf = cls(epochs_max=20, patience=20, batch_size=16, lr=1e-3).fit(X, y)
            losses = [row["loss"] for row in clf.history_]
            assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))

    def test_single_class_training_rejected(self):
        X, y = _toy(n=8, channels=2, length=32)
        for cls in ALL:
            with pytest.raises(ValueError, match="both classes"):
                cls().fit(X, np.zeros(8, dtype=int))
            with pytest.raises(ValueError, match="both classes"):
                cls().fit(X, y, validation=(X[:4], np.ones(4, dtype=int)))

    def test_segment_lists_carry_their_own_labels(self):
        segs = _toy_segments()
        clf = MlpClassifier(epochs_max=2).fit(segs)
        assert clf.channels_ == 2 and clf.segment_len_ == 32
        assert clf.predict_proba(segs).shape == (8, 2)

    def test_validation_may_be_a_segment_list(self):
        segs = _toy_segments()
        clf = MlpClassifier(epochs_max=2).fit(segs, validation=segs)
        assert clf.n_epochs_ >= 1

    def test_bare_arrays_require_labels(self):
        X, _ = _toy(n=4, channels=2, length=32)
        with pytest.raises(ValueError, match="labels are required"):
            MlpClassifier().fit(X)

    def test_geometry_mismatch_on_predict_rejected(self):
        X, y = _toy(n=8, channels=2, length=32)
        clf = MlpClassifier(epochs_max=1).fit(X, y)
        with pytest.raises(ValueError, match="expects"):
            clf.predict_proba(np.zeros((3, 2, 16)))

    def test_sklearn_clone_trains_identically(self):
        X, y = _toy(n=12, channels=2, length=32)
        original = TransformerClassifier(epochs_max=4, seed=2)
        copied = clone(original)
        assert original.fit(X, y).history_ == copied.fit(X, y).history_


class TestCnnFusion:
    def test_fusion_weights_sum_to_one(self):
        X, y = _toy(n=8, channels=2, length=32)
        clf = DilatedCnnClassifier(epochs_max=3, scales=(1, 2, 4)).fit(X, y)
        weights = clf.fusion_weights(X[0])
        assert weights.shape == (3,)
        assert abs(weights.sum() - 1.0) < 1e-12

    def test_at_least_one_scale_required(self):
        X, y = _toy(n=8, channels=2, length=32)
        with pytest.raises(ValueError, match="scale"):
            DilatedCnnClassifier(scales=()).fit(X, y)


class TestTransformerGeometry:
    def test_heads_must_divide_model_width(self):
        X, y = _toy(n=8, channels=2, length=32)
        with pytest.raises(ValueError, match="divisible"):
            TransformerClassifier(d_model=16, heads=3).fit(X, y)

    def test_patch_must_divide_segment_length(self):
        X, y = _toy(n=8, channels=2, length=32)
        with pytest.raises(ValueError, match="multiple"):
            TransformerClassifier(patch=7).fit(X, y)


class TestGradients:
    def test_full_graphs_match_finite_differences(self):
        # one representative toy segment through every architecture's graph
        rng = np.random.default_rng(0)
        x = rng.normal(size=(4, 64))
        X, y = _toy(n=8, channels=4, length=64)
        models = [
            MlpClassifier(time_units=6, channel_units=5, epochs_max=2),
            DilatedCnnClassifier(channels=3, mix_channels=3, epochs_max=2),
            TransformerClassifier(patch=16, d_model=8, heads=2, ff_units=10,
                                  epochs_max=2),
        ]
        for clf in models:
            clf.fit(X, y)  # a couple of steps so the head is off zero

            def loss():
                z = clf._forward(x)
                return ad.mean(ad.sub(ad.softplus(z), z))

            worst = fd_gradients(loss, list(clf.params_.values()),
                                 max_coords=12, rng=np.random.default_rng(8))
            assert worst < 1e-3


class TestRegistry:
    def test_known_tags_build_their_family(self):
        assert set(ARCHITECTURES) == {"mlp", "cnn", "transformer"}
        assert isinstance(make_classifier("mlp"), MlpClassifier)
        assert make_classifier("cnn", scales=(1, 2, 4, 8)).scales == (1, 2, 4, 8)

    def test_unknown_tag_rejected(self):
        with pytest.raises(ValueError, match="unknown architecture"):
            make_classifier("svm")
