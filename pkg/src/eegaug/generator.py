"""Estimator wrapper around the diffusion model.

`DiffusionGenerator.fit` learns the noise predictor from a set of segments
(typically the preictal class); `generate` then draws synthetic segments
guided by donor spectrograms.  The heavy lifting lives in the `diffusion`,
`network`, and `signal` modules; this class only packages geometry handling,
training options, and checkpointing behind a fit/generate interface.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .diffusion import TrainOptions, pack_state, sample, train
from .io import save_checkpoint
from .network import NoisePredictor, config_for_segments
from .schedule import linear_schedule
from .signal import log_compress, stft_magnitude
from .validation import check_fitted, check_geometry, segments_to_array


class DiffusionGenerator(BaseEstimator):
    """Denoising diffusion over fixed-geometry EEG segments.

    The spectrogram window must equal the hop so the conditioner frames tile
    the segment exactly.
    """

    def __init__(self, steps=50, beta_start=1e-4, beta_end=0.05,
                 window_len=256, hop=256, channels=32, layers=12, blocks=3,
                 kernel=3, iters=300, batch_size=8, lr=2e-4, seed=0):
        self.steps = steps
        self.beta_start = beta_start
        self.beta_end = beta_end
        self.window_len = window_len
        self.hop = hop
        self.channels = channels
        self.layers = layers
        self.blocks = blocks
        self.kernel = kernel
        self.iters = iters
        self.batch_size = batch_size
        self.lr = lr
        self.seed = seed

    def fit(self, X, y=None):
        arrays = segments_to_array(X)
        self.n_channels_, self.segment_len_ = arrays.shape[1], arrays.shape[2]
        self.schedule_ = linear_schedule(self.steps, self.beta_start, self.beta_end)
        config = config_for_segments(
            self.n_channels_, self.segment_len_, self.window_len, self.hop,
            channels=self.channels, layers=self.layers, blocks=self.blocks,
            kernel=self.kernel)
        self.net_ = NoisePredictor(config, seed=self.seed)
        conditioners = [self._conditioner(a) for a in arrays]
        options = TrainOptions(iters=self.iters, batch=self.batch_size,
                               lr=self.lr, seed=self.seed)
        self.state_ = train(list(arrays), conditioners, self.net_,
                            self.schedule_, options)
        self.loss_trace_ = list(self.state_.loss_trace)
        return self

    def generate(self, donors, count=None, seed=None) -> np.ndarray:
        """Draw `count` synthetic segments, cycling donor spectrograms."""
        check_fitted(self, "net_")
        arrays = segments_to_array(donors)
        check_geometry(arrays, self.n_channels_, self.segment_len_)
        if count is None:
            count = len(arrays)
        if count < 0:
            raise ValueError(f"count must be non-negative, got {count}")
        rng = np.random.default_rng(self.seed if seed is None else seed)
        conditioners = [self._conditioner(a) for a in arrays]
        out = np.empty((count, self.n_channels_, self.segment_len_))
        for i in range(count):
            out[i] = sample(self.net_, conditioners[i % len(conditioners)],
                            self.schedule_, rng)
        return out

    def save(self, path) -> None:
        """Write parameters, optimizer moments, and progress as a checkpoint."""
        check_fitted(self, "state_")
        tensors, meta = pack_state(self.state_)
        save_checkpoint(path, tensors, meta)

    def _conditioner(self, data: np.ndarray):
        return log_compress(stft_magnitude(data, self.window_len, self.hop))
