"""Noise-prediction network: gated residual dilated convolutions with
diffusion-step and spectrogram conditioning.

Layer l (residual channels C, kernel K, dilation doubling within blocks):

    y   = BiDilConv(residual_in + step_bias)        # C -> 2C, non-causal
    y  += Conv1x1(upsampled_spectrogram)            # bins -> 2C, per layer
    gate = tanh(y[:C]) * sigmoid(y[C:])
    residual_out = (residual_in + Conv1x1(gate)) / sqrt(2)
    skip_l       = Conv1x1(gate)

Skips are summed and fed through relu -> Conv1x1 -> relu -> Conv1x1 to the
input channel count.  The step bias is a learned 128 -> C projection of the
sinusoidal step embedding, broadcast over time.  The spectrogram is upsampled
to segment length by two transposed 2-D convolutions (leaky-relu between and
after) whose time strides multiply to the STFT hop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .diffusion import EMBEDDING_DIM, step_embedding
from .seeding import named_streams
from .signal import Spectrogram


def split_stride(hop: int) -> tuple[int, int]:
    """Largest near-square factor pair of the hop, (small, large)."""
    best = 1
    for a in range(1, int(math.isqrt(hop)) + 1):
        if hop % a == 0:
            best = a
    return best, hop // best


@dataclass(frozen=True)
class NetConfig:
    """Geometry and capacity of the noise predictor."""

    in_channels: int  # H
    segment_len: int  # L
    cond_bins: int
    cond_frames: int
    hop: int
    channels: int = 32  # C, residual width
    layers: int = 12  # N
    blocks: int = 3  # m
    kernel: int = 3  # K, odd
    upsample_t: tuple[int, int] = ()  # time strides; product == hop
    upsample_kernel_f: int = 3

    def __post_init__(self):
        if not self.upsample_t:
            object.__setattr__(self, "upsample_t", split_stride(self.hop))
        if self.layers % self.blocks != 0:
            raise ValueError(f"layers {self.layers} not divisible by blocks {self.blocks}")
        if self.kernel % 2 == 0:
            raise ValueError(f"kernel must be odd, got {self.kernel}")
        if self.upsample_t[0] * self.upsample_t[1] != self.hop:
            raise ValueError(
                f"upsample time strides {self.upsample_t} must multiply to hop {self.hop}")
        if self.cond_frames * self.hop != self.segment_len:
            raise ValueError(
                f"conditioner frames {self.cond_frames} x hop {self.hop} "
                f"!= segment length {self.segment_len}")

    @property
    def layers_per_block(self) -> int:
        return self.layers // self.blocks

    def dilations(self) -> list[int]:
        """Per-layer dilation; resets each block, doubles within a block."""
        return [2 ** (l % self.layers_per_block) for l in range(self.layers)]

    def receptive_field(self) -> int:
        n = self.layers_per_block
        return 1 + self.blocks * (self.kernel - 1) * (2**n - 1)


def config_for_segments(in_channels: int, segment_len: int, window_len: int,
                        hop: int, **kwargs) -> NetConfig:
    """Derive conditioner geometry from the STFT parameters."""
    bins = window_len // 2 + 1
    frames = (segment_len - window_len) // hop + 1
    return NetConfig(in_channels=in_channels, segment_len=segment_len,
                     cond_bins=bins, cond_frames=frames, hop=hop, **kwargs)


class NoisePredictor:
    """The learned reverse-process noise estimator."""

    def __init__(self, config: NetConfig, seed: int = 0):
        self.config = config
        rng = named_streams(seed, ("init",))["init"]
        C, H, K = config.channels, config.in_channels, config.kernel
        bins = config.cond_bins

        def conv_init(*shape):
            fan_in = int(np.prod(shape[1:]))
            return ad.parameter(rng.normal(scale=1.0 / math.sqrt(fan_in), size=shape))

        p: dict[str, ad.Tensor] = {}
        p["in.w"] = conv_init(C, H, 1)
        p["in.b"] = ad.parameter(np.zeros((C, 1)))
        s1, s2 = config.upsample_t
        kf = config.upsample_kernel_f
        p["up1.w"] = conv_init(1, 1, kf, 2 * s1)
        p["up2.w"] = conv_init(1, 1, kf, 2 * s2)
        for l in range(config.layers):
            p[f"layer{l:02d}.dil.w"] = conv_init(2 * C, C, K)
            p[f"layer{l:02d}.cond.w"] = conv_init(2 * C, bins, 1)
            p[f"layer{l:02d}.step.w"] = ad.parameter(
                rng.normal(scale=1.0 / math.sqrt(EMBEDDING_DIM), size=(C, EMBEDDING_DIM)))
            p[f"layer{l:02d}.step.b"] = ad.parameter(np.zeros((C, 1)))
            p[f"layer{l:02d}.res.w"] = conv_init(C, C, 1)
            p[f"layer{l:02d}.skip.w"] = conv_init(C, C, 1)
        p["head1.w"] = conv_init(C, C, 1)
        # zero-initialized output layer: the untrained net predicts zero noise
        p["head2.w"] = ad.parameter(np.zeros((H, C, 1)))
        self.params = p
        self._dilations = config.dilations()

    def upsample_conditioner(self, spec: Spectrogram) -> ad.Tensor:
        """(bins, frames) -> (bins, L) through the two transposed convs."""
        cfg = self.config
        if spec.bins != cfg.cond_bins:
            raise ValueError(f"conditioner has {spec.bins} bins, net expects {cfg.cond_bins}")
        s1, s2 = cfg.upsample_t
        if spec.frames * s1 * s2 != cfg.segment_len:
            raise ValueError(
                f"conditioner frames {spec.frames} x strides {s1}*{s2} "
                f"!= segment length {cfg.segment_len}")
        h = ad.reshape(ad.as_tensor(spec.values), (1, spec.bins, spec.frames))
        h = ad.leaky_relu(ad.transposed_conv2d(h, self.params["up1.w"], 1, s1), 0.4)
        h = ad.leaky_relu(ad.transposed_conv2d(h, self.params["up2.w"], 1, s2), 0.4)
        return ad.reshape(h, (spec.bins, cfg.segment_len))

    def forward(self, x_t, t: int, cond: Spectrogram) -> ad.Tensor:
        return self.forward_upsampled(x_t, t, self.upsample_conditioner(cond))

    __call__ = forward

    def forward_upsampled(self, x_t, t: int, cond_up: ad.Tensor) -> ad.Tensor:
        """Forward pass with a precomputed (bins, L) conditioner."""
        cfg = self.config
        x_t = ad.as_tensor(x_t)
        if x_t.shape != (cfg.in_channels, cfg.segment_len):
            raise ValueError(
                f"input shape {x_t.shape} != ({cfg.in_channels}, {cfg.segment_len})")
        C = cfg.channels
        p = self.params
        emb = ad.as_tensor(step_embedding(t)[:, None])  # (128, 1)

        h = ad.relu(ad.add(ad.conv1d(x_t, p["in.w"]), p["in.b"]))
        skip_sum = None
        inv_sqrt2 = ad.as_tensor(1.0 / math.sqrt(2.0))
        for l, dilation in enumerate(self._dilations):
            step_bias = ad.add(ad.matmul(p[f"layer{l:02d}.step.w"], emb),
                               p[f"layer{l:02d}.step.b"])  # (C, 1)
            y = ad.dilated_conv1d(ad.add(h, step_bias), p[f"layer{l:02d}.dil.w"], dilation)
            y = ad.add(y, ad.conv1d(cond_up, p[f"layer{l:02d}.cond.w"]))
            gate = ad.mul(ad.tanh(ad.rows(y, 0, C)), ad.sigmoid(ad.rows(y, C, 2 * C)))
            h = ad.mul(ad.add(h, ad.conv1d(gate, p[f"layer{l:02d}.res.w"])), inv_sqrt2)
            skip = ad.conv1d(gate, p[f"layer{l:02d}.skip.w"])
            skip_sum = skip if skip_sum is None else ad.add(skip_sum, skip)

        out = ad.conv1d(ad.relu(skip_sum), p["head1.w"])
        return ad.conv1d(ad.relu(out), p["head2.w"])
