"""STFT conditioners, spectrogram recombination, normalization, synthetic EEG.

The conditioner pipeline for generation is:
    stft_magnitude (Hann window, magnitude, channel-averaged)
    -> log_compress (log(1+S) dynamic-range control)
    -> network upsampling
stft_magnitude itself returns raw magnitudes; compression is a separate,
explicit step so the spectrogram type stays a plain magnitude array.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dataset import Recording, Segment
from .seeding import named_streams


@dataclass
class Spectrogram:
    """Nonnegative STFT magnitudes, (bins, frames), with frame geometry."""

    values: np.ndarray
    window_len: int
    hop: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError(f"spectrogram values must be (bins, frames), got {self.values.shape}")
        if np.any(self.values < 0):
            raise ValueError("spectrogram magnitudes must be nonnegative")

    @property
    def bins(self) -> int:
        return self.values.shape[0]

    @property
    def frames(self) -> int:
        return self.values.shape[1]


def hann(window_len: int) -> np.ndarray:
    """Periodic Hann window (DFT-even), peak 1."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(window_len) / window_len)


def stft_magnitude(data: np.ndarray, window_len: int, hop: int) -> Spectrogram:
    """Magnitude STFT of one channel, or the channel-mean for (H, L) input.

    frames = floor((L - window_len) / hop) + 1, bins = window_len // 2 + 1.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 1:
        data = data[None, :]
    if data.ndim != 2:
        raise ValueError(f"expected (L,) or (H, L) input, got shape {data.shape}")
    length = data.shape[1]
    if window_len > length:
        raise ValueError(f"window {window_len} longer than segment {length}")
    if hop < 1:
        raise ValueError(f"hop must be >= 1, got {hop}")
    frames = (length - window_len) // hop + 1
    idx = hop * np.arange(frames)[:, None] + np.arange(window_len)[None, :]
    windowed = data[:, idx] * hann(window_len)  # (H, frames, window)
    mags = np.abs(np.fft.rfft(windowed, axis=-1))  # (H, frames, bins)
    return Spectrogram(values=mags.mean(axis=0).T, window_len=window_len, hop=hop)


def log_compress(spec: Spectrogram) -> Spectrogram:
    """log(1 + S) compression applied before a spectrogram conditions the net."""
    return Spectrogram(values=np.log1p(spec.values), window_len=spec.window_len, hop=spec.hop)


def thirds(n: int) -> tuple[int, int]:
    """Cut points splitting n items into three contiguous near-equal parts."""
    return n // 3, 2 * n // 3


def recombine_spectrograms(a: Spectrogram, b: Spectrogram, c: Spectrogram,
                           rng: np.random.Generator) -> Spectrogram:
    """Splice thirds of the time axis from randomly chosen donors.

    Each third comes from a donor drawn uniformly from {a, b, c}; donors may
    repeat.  Geometry must match across donors.
    """
    donors = (a, b, c)
    for d in donors[1:]:
        if d.values.shape != a.values.shape or d.window_len != a.window_len or d.hop != a.hop:
            raise ValueError("donor spectrograms must share geometry")
    cut1, cut2 = thirds(a.frames)
    picks = rng.integers(0, 3, size=3)
    values = np.concatenate([
        donors[picks[0]].values[:, :cut1],
        donors[picks[1]].values[:, cut1:cut2],
        donors[picks[2]].values[:, cut2:],
    ], axis=1)
    return Spectrogram(values=values, window_len=a.window_len, hop=a.hop)


def normalize(seg):
    """Per-channel zero mean, unit variance; constant channels map to zero.

    Accepts a Segment (returns a Segment with identical metadata) or a bare
    (H, L) array.
    """
    if isinstance(seg, Segment):
        return replace(seg, data=normalize(seg.data))
    data = np.asarray(seg, dtype=np.float64)
    centered = data - data.mean(axis=-1, keepdims=True)
    std = centered.std(axis=-1, keepdims=True)
    return np.divide(centered, std, out=np.zeros_like(centered), where=std > 0)


@dataclass(frozen=True)
class SyntheticProfile:
    """Parameters of the synthetic EEG generator.

    Preictal and interictal stretches share the background rhythm and pink
    noise exactly; the only preictal-specific content is the low-frequency
    signature whose amplitude ramps linearly from 0 to signature_amp over
    ramp_s before each onset.
    """

    channels: int = 4
    fs: int = 64
    rhythm_hz: float = 10.0
    rhythm_amp: float = 1.0
    pink_level: float = 1.0
    signature_hz: float = 3.0
    signature_amp: float = 2.0
    ramp_s: float = 1800.0
    seed: int = 0

    def __post_init__(self):
        if self.channels < 1 or self.fs < 1:
            raise ValueError("channels and fs must be positive")
        if not 0 < self.signature_hz < self.fs / 2 or not 0 < self.rhythm_hz < self.fs / 2:
            raise ValueError("component frequencies must sit below Nyquist")


def _pink_noise(rng: np.random.Generator, channels: int, n: int) -> np.ndarray:
    """1/f-shaped Gaussian noise, unit variance per channel."""
    freqs = np.fft.rfftfreq(n)
    shaping = np.zeros_like(freqs)
    shaping[1:] = 1.0 / np.sqrt(freqs[1:])
    spectrum = (rng.normal(size=(channels, len(freqs)))
                + 1j * rng.normal(size=(channels, len(freqs)))) * shaping
    noise = np.fft.irfft(spectrum, n=n, axis=-1)
    std = noise.std(axis=-1, keepdims=True)
    return noise / np.where(std > 0, std, 1.0)


def synth_record(profile: SyntheticProfile, duration_s: float,
                 seizure_onsets: list[float], seizure_len_s: float = 60.0,
                 record_id: str = "synth-0") -> Recording:
    """Deterministic synthetic multichannel EEG with annotated seizures."""
    if list(seizure_onsets) != sorted(seizure_onsets):
        raise ValueError("seizure onsets must be sorted")
    if seizure_onsets and not (0.0 <= seizure_onsets[0]
                               and seizure_onsets[-1] + seizure_len_s <= duration_s):
        raise ValueError("seizure onsets must fall inside the recording")
    fs, H = profile.fs, profile.channels
    n = int(round(duration_s * fs))
    t = np.arange(n) / fs
    streams = named_streams(profile.seed, ("pink", "phase"))
    phases = streams["phase"].uniform(0.0, 2.0 * np.pi, size=(3, H))

    x = profile.rhythm_amp * np.sin(2 * np.pi * profile.rhythm_hz * t[None, :] + phases[0][:, None])
    x = x + profile.pink_level * _pink_noise(streams["pink"], H, n)

    for onset in seizure_onsets:
        lo = max(0, int(round((onset - profile.ramp_s) * fs)))
        hi = int(round(onset * fs))
        if hi > lo:
            ramp = (np.arange(lo, hi) - (hi - profile.ramp_s * fs)) / (profile.ramp_s * fs)
            ramp = np.clip(ramp, 0.0, 1.0)
            sig = np.sin(2 * np.pi * profile.signature_hz * t[lo:hi][None, :] + phases[1][:, None])
            x[:, lo:hi] += profile.signature_amp * ramp[None, :] * sig
        # ictal marker: strong rhythmic burst, excluded from all labeled data
        i_hi = min(n, int(round((onset + seizure_len_s) * fs)))
        burst = np.sin(2 * np.pi * 4.0 * t[hi:i_hi][None, :] + phases[2][:, None])
        x[:, hi:i_hi] += 3.0 * profile.rhythm_amp * burst

    annotations = [(float(on), float(min(duration_s, on + seizure_len_s)))
                   for on in seizure_onsets]
    return Recording(id=record_id, fs=fs, samples=x, annotations=annotations)
