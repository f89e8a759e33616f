"""Three classifier families for preictal-vs-interictal segments.

All of them share the input contract (multichannel segments of one fixed
geometry), emit a preictal probability through a sigmoid, and train with the
same minibatch loop: binary cross-entropy, Adam, and early stopping once
neither validation sensitivity nor specificity has improved for `patience`
consecutive epochs.  The returned model is the checkpoint with the best
sensitivity + specificity sum.

Families:
  MlpClassifier          per-channel then cross-channel dense mixing
  DilatedCnnClassifier   parallel dilated convolutions fused by attention
  TransformerClassifier  strided-conv embedding + self-attention encoder
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from . import autodiff as ad
from .dataset import INTERICTAL, PREICTAL
from .seeding import named_streams
from .validation import (
    check_fitted,
    check_geometry,
    require_both_classes,
    segments_to_array,
    unpack_dataset,
)


def attention(q: ad.Tensor, k: ad.Tensor, v: ad.Tensor) -> ad.Tensor:
    """Scaled dot-product attention: softmax(q kᵀ / sqrt(d_k)) v.

    q is (n, d_k), k is (m, d_k), v is (m, d_v); rows of the softmax factor
    sum to one, so each output row is a convex mix of value rows.
    """
    q, k, v = ad.as_tensor(q), ad.as_tensor(k), ad.as_tensor(v)
    if q.ndim != 2 or k.ndim != 2 or v.ndim != 2:
        raise ValueError("attention expects 2-D q, k, v")
    if q.shape[1] != k.shape[1]:
        raise ValueError(f"query/key widths differ: {q.shape} vs {k.shape}")
    if k.shape[0] != v.shape[0]:
        raise ValueError(f"key/value counts differ: {k.shape} vs {v.shape}")
    scale = 1.0 / math.sqrt(q.shape[1])
    scores = ad.mul(ad.matmul(q, ad.transpose(k)), scale)
    return ad.matmul(ad.softmax(scores), v)


def sinusoidal_positions(count: int, width: int) -> np.ndarray:
    """Fixed positional encoding: sin/cos pairs at geometric wavelengths."""
    if width % 2 != 0:
        raise ValueError(f"encoding width must be even, got {width}")
    pos = np.arange(count, dtype=np.float64)[:, None]
    rate = np.exp(-np.arange(0, width, 2, dtype=np.float64) * (math.log(10000.0) / width))
    table = np.zeros((count, width))
    table[:, 0::2] = np.sin(pos * rate)
    table[:, 1::2] = np.cos(pos * rate)
    return table


def _sens_spec(probs: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    # decisions use a strict threshold so an untrained 0.5 output stays negative
    positive = probs > 0.5
    pre = y == PREICTAL
    sens = float(positive[pre].mean())
    spec = float((~positive[~pre]).mean())
    return sens, spec


class _SegmentClassifier(ClassifierMixin, BaseEstimator):
    """Shared fit/predict loop; subclasses define parameters and the graph."""

    def fit(self, X, y=None, validation=None):
        arrays, labels = unpack_dataset(X, y)
        require_both_classes(labels, "training data")
        if validation is None:
            val_arrays, val_labels = arrays, labels
        else:
            val_arrays, val_labels = unpack_dataset(*validation) \
                if isinstance(validation, tuple) else unpack_dataset(validation)
        require_both_classes(val_labels, "validation data")
        if val_arrays.shape[1:] != arrays.shape[1:]:
            raise ValueError("validation geometry differs from training geometry")
        if self.epochs_max < 1:
            raise ValueError("epochs_max must be at least 1")

        self.classes_ = np.array([INTERICTAL, PREICTAL])
        self.channels_, self.segment_len_ = arrays.shape[1], arrays.shape[2]
        streams = named_streams(self.seed, ("init", "shuffle"))
        self.params_ = self._init_params(streams["init"])
        optimizer = ad.Adam(self.params_, lr=self.lr)

        history = []
        best_sens = best_spec = -np.inf
        best_sum, best_snapshot = -np.inf, None
        stale = 0
        for epoch in range(1, self.epochs_max + 1):
            order = streams["shuffle"].permutation(len(arrays))
            losses = []
            for lo in range(0, len(order), self.batch_size):
                batch = order[lo:lo + self.batch_size]
                logits = ad.concat([self._forward(arrays[i]) for i in batch], axis=0)
                target = labels[batch].astype(np.float64)[:, None]
                loss = ad.mean(ad.sub(ad.softplus(logits), ad.mul(logits, target)))
                ad.zero_grad(self.params_)
                ad.backward(loss)
                optimizer.step()
                losses.append(float(loss.data))
            sens, spec = _sens_spec(self._probabilities(val_arrays), val_labels)
            history.append({"epoch": epoch, "loss": float(np.mean(losses)),
                            "val_sensitivity": sens, "val_specificity": spec})
            if sens + spec > best_sum:
                best_sum = sens + spec
                best_snapshot = {k: p.data.copy() for k, p in self.params_.items()}
                self.best_epoch_ = epoch
            if sens > best_sens or spec > best_spec:
                best_sens = max(best_sens, sens)
                best_spec = max(best_spec, spec)
                stale = 0
            else:
                stale += 1
                if stale >= self.patience:
                    break
        for name, data in best_snapshot.items():
            self.params_[name].data[:] = data
        self.history_ = history
        self.n_epochs_ = len(history)
        return self

    def predict_proba(self, X) -> np.ndarray:
        check_fitted(self, "params_")
        arrays = segments_to_array(X)
        check_geometry(arrays, self.channels_, self.segment_len_)
        preictal = self._probabilities(arrays)
        return np.column_stack([1.0 - preictal, preictal])

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X)[:, 1] > 0.5).astype(np.int64)

    def _probabilities(self, arrays: np.ndarray) -> np.ndarray:
        with ad.no_grad():
            return np.array([ad.sigmoid(self._forward(a)).data.item() for a in arrays])

    def _init_params(self, rng: np.random.Generator) -> dict:
        raise NotImplementedError

    def _forward(self, x: np.ndarray) -> ad.Tensor:
        raise NotImplementedError


def _glorot(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> ad.Tensor:
    return ad.parameter(rng.normal(0.0, 1.0 / math.sqrt(fan_in), size=shape))


class MlpClassifier(_SegmentClassifier):
    """Dense mixing along time within each channel, then across channels.

    The pooled cross-channel features feed a zero-initialized head, so a
    fresh model outputs probability 0.5 for every segment.
    """

    def __init__(self, time_units=24, channel_units=16, epochs_max=40,
                 patience=5, batch_size=16, lr=1e-2, seed=0):
        self.time_units = time_units
        self.channel_units = channel_units
        self.epochs_max = epochs_max
        self.patience = patience
        self.batch_size = batch_size
        self.lr = lr
        self.seed = seed

    def _init_params(self, rng):
        return {
            "time.w": _glorot(rng, (self.time_units, self.segment_len_), self.segment_len_),
            "time.b": ad.parameter(np.zeros((1, self.time_units))),
            "chan.w": _glorot(rng, (self.channel_units, self.channels_), self.channels_),
            "chan.b": ad.parameter(np.zeros((self.channel_units, 1))),
            "head.w": ad.parameter(np.zeros((self.channel_units, 1))),
            "head.b": ad.parameter(np.zeros((1, 1))),
        }

    def _forward(self, x):
        p = self.params_
        h = ad.relu(ad.add(ad.matmul(ad.as_tensor(x), ad.transpose(p["time.w"])), p["time.b"]))
        g = ad.relu(ad.add(ad.matmul(p["chan.w"], h), p["chan.b"]))
        pooled = ad.reshape(ad.global_average_pool(g), (1, self.channel_units))
        return ad.add(ad.matmul(pooled, p["head.w"]), p["head.b"])


class DilatedCnnClassifier(_SegmentClassifier):
    """Parallel dilated convolution branches fused by attention weights.

    Each branch sees the segment at one dilation scale; a shared dense layer
    scores each branch from its pooled activations and a softmax over the
    scores weights the sum.  A 1x1 convolution head pools into the logit.
    """

    def __init__(self, scales=(1, 2, 4), channels=8, kernel=3, mix_channels=8,
                 epochs_max=40, patience=5, batch_size=16, lr=1e-2, seed=0):
        self.scales = scales
        self.channels = channels
        self.kernel = kernel
        self.mix_channels = mix_channels
        self.epochs_max = epochs_max
        self.patience = patience
        self.batch_size = batch_size
        self.lr = lr
        self.seed = seed

    def _init_params(self, rng):
        if len(self.scales) < 1:
            raise ValueError("at least one dilation scale is required")
        params = {}
        fan = self.channels_ * self.kernel
        for scale in self.scales:
            params[f"scale{scale}.w"] = _glorot(
                rng, (self.channels, self.channels_, self.kernel), fan)
            params[f"scale{scale}.b"] = ad.parameter(np.zeros((self.channels, 1)))
        params["fuse.w"] = _glorot(rng, (self.channels, 1), self.channels)
        params["fuse.b"] = ad.parameter(np.zeros((1, 1)))
        params["mix.w"] = _glorot(rng, (self.mix_channels, self.channels, 1), self.channels)
        params["mix.b"] = ad.parameter(np.zeros((self.mix_channels, 1)))
        params["head.w"] = ad.parameter(np.zeros((self.mix_channels, 1)))
        params["head.b"] = ad.parameter(np.zeros((1, 1)))
        return params

    def _branches_and_weights(self, x):
        p = self.params_
        branches, scores = [], []
        for scale in self.scales:
            branch = ad.relu(ad.add(
                ad.dilated_conv1d(ad.as_tensor(x), p[f"scale{scale}.w"], scale),
                p[f"scale{scale}.b"]))
            pooled = ad.reshape(ad.global_average_pool(branch), (1, self.channels))
            scores.append(ad.add(ad.matmul(pooled, p["fuse.w"]), p["fuse.b"]))
            branches.append(branch)
        weights = ad.softmax(ad.concat(scores, axis=1))
        return branches, weights

    def _forward(self, x):
        p = self.params_
        branches, weights = self._branches_and_weights(x)
        per_scale = ad.transpose(weights)
        fused = None
        for i, branch in enumerate(branches):
            term = ad.mul(branch, ad.rows(per_scale, i, i + 1))
            fused = term if fused is None else ad.add(fused, term)
        mixed = ad.relu(ad.add(ad.conv1d(fused, p["mix.w"]), p["mix.b"]))
        pooled = ad.reshape(ad.global_average_pool(mixed), (1, self.mix_channels))
        return ad.add(ad.matmul(pooled, p["head.w"]), p["head.b"])

    def fusion_weights(self, segment) -> np.ndarray:
        """Per-scale attention weights for one segment; they sum to one."""
        check_fitted(self, "params_")
        arrays = segments_to_array([segment] if not isinstance(segment, np.ndarray)
                                   else segment)
        check_geometry(arrays, self.channels_, self.segment_len_)
        with ad.no_grad():
            _, weights = self._branches_and_weights(arrays[0])
        return weights.data[0].copy()


class TransformerClassifier(_SegmentClassifier):
    """Self-attention encoder over strided-convolution patch embeddings.

    Patches of `patch` samples embed into d_model tokens, a fixed sinusoidal
    code marks positions, multi-head attention and a two-layer feed-forward
    block (both residual) mix them, and mean pooling feeds the head.
    """

    def __init__(self, patch=8, d_model=16, heads=2, ff_units=32,
                 epochs_max=40, patience=5, batch_size=16, lr=1e-2, seed=0):
        self.patch = patch
        self.d_model = d_model
        self.heads = heads
        self.ff_units = ff_units
        self.epochs_max = epochs_max
        self.patience = patience
        self.batch_size = batch_size
        self.lr = lr
        self.seed = seed

    def _init_params(self, rng):
        if self.d_model % self.heads != 0:
            raise ValueError(f"d_model {self.d_model} is not divisible by "
                             f"{self.heads} heads")
        if self.segment_len_ % self.patch != 0:
            raise ValueError(f"segment length {self.segment_len_} is not a "
                             f"multiple of patch {self.patch}")
        self._positions = sinusoidal_positions(self.segment_len_ // self.patch,
                                               self.d_model)
        d, dh = self.d_model, self.d_model // self.heads
        params = {
            "emb.w": _glorot(rng, (d, self.channels_, self.patch),
                             self.channels_ * self.patch),
            "emb.b": ad.parameter(np.zeros((d, 1))),
            "attn.out.w": _glorot(rng, (d, d), d),
            "ff1.w": _glorot(rng, (d, self.ff_units), d),
            "ff1.b": ad.parameter(np.zeros((1, self.ff_units))),
            "ff2.w": _glorot(rng, (self.ff_units, d), self.ff_units),
            "ff2.b": ad.parameter(np.zeros((1, d))),
            "head.w": ad.parameter(np.zeros((d, 1))),
            "head.b": ad.parameter(np.zeros((1, 1))),
        }
        for h in range(self.heads):
            for part in ("q", "k", "v"):
                params[f"attn{h}.{part}.w"] = _glorot(rng, (d, dh), d)
        return params

    def _forward(self, x):
        p = self.params_
        embedded = ad.conv1d(ad.as_tensor(x), p["emb.w"], stride=self.patch)
        tokens = ad.add(ad.transpose(ad.add(embedded, p["emb.b"])), self._positions)
        mixed = ad.concat(
            [attention(ad.matmul(tokens, p[f"attn{h}.q.w"]),
                       ad.matmul(tokens, p[f"attn{h}.k.w"]),
                       ad.matmul(tokens, p[f"attn{h}.v.w"]))
             for h in range(self.heads)], axis=1)
        h = ad.add(tokens, ad.matmul(mixed, p["attn.out.w"]))
        ff = ad.matmul(ad.relu(ad.add(ad.matmul(h, p["ff1.w"]), p["ff1.b"])), p["ff2.w"])
        h = ad.add(h, ad.add(ff, p["ff2.b"]))
        pooled = ad.reshape(ad.global_average_pool(ad.transpose(h)), (1, self.d_model))
        return ad.add(ad.matmul(pooled, p["head.w"]), p["head.b"])


ARCHITECTURES = {
    "mlp": MlpClassifier,
    "cnn": DilatedCnnClassifier,
    "transformer": TransformerClassifier,
}


def make_classifier(arch: str, **kwargs) -> _SegmentClassifier:
    """Instantiate a classifier family by tag; kwargs go to its constructor."""
    if arch not in ARCHITECTURES:
        raise ValueError(f"unknown architecture {arch!r}, "
                         f"expected one of {sorted(ARCHITECTURES)}")
    return ARCHITECTURES[arch](**kwargs)
