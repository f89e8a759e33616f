"""Class balancing: majority downsampling plus three minority-growing methods.

Every method ends with equal preictal/interictal counts in the returned
training set.  Downsampling shrinks the majority; sliding windows re-cut the
preictal regions densely (the original tiling is the stride-aligned subset);
recombination splices thirds of donors within one seizure's pool; diffusion
generation samples the trained noise predictor conditioned half on real and
half on recombined spectrograms.  Recombined and generated segments carry
synthetic=True so they can never leak into a test split unnoticed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import INTERICTAL, PREICTAL, Segment
from .diffusion import sample
from .seeding import named_streams
from .signal import log_compress, recombine_spectrograms, stft_magnitude, thirds

METHODS = ("downsample", "sliding_window", "recombine", "diffusion")


@dataclass(frozen=True)
class BalancePlan:
    method: str
    window_s: float = 30.0
    stride_s: float = 5.0
    seed: int = 0
    checkpoint: str | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown balance method {self.method!r}; "
                             f"choose from {', '.join(METHODS)}")
        if self.stride_s <= 0 or self.window_s <= 0:
            raise ValueError("window and stride must be positive")


@dataclass(frozen=True)
class Span:
    """A maximal contiguous run of stored preictal signal."""

    data: np.ndarray  # (H, samples)
    record_id: str
    start_s: float
    seizure: int | None

    @property
    def samples(self) -> int:
        return self.data.shape[1]


def split_classes(segments) -> tuple[list[Segment], list[Segment]]:
    pre = [s for s in segments if s.label == PREICTAL]
    inter = [s for s in segments if s.label == INTERICTAL]
    return pre, inter


def downsample(segments, rng: np.random.Generator) -> list[Segment]:
    """Keep all preictal; pick an equal-size interictal subset uniformly."""
    pre, inter = split_classes(segments)
    if len(pre) > len(inter):
        raise ValueError(f"downsampling needs interictal >= preictal, "
                         f"got {len(inter)} < {len(pre)}")
    keep = set(rng.choice(len(inter), size=len(pre), replace=False).tolist())
    chosen = [seg for i, seg in enumerate(inter) if i in keep]
    return chosen + pre


def contiguous_spans(preictal, fs: int, segment_seconds: float) -> list[Span]:
    """Stitch stored segments back into the runs they tiled.

    Adjacency is decided in integer sample space, so float start times
    cannot split a run.
    """
    length = None
    groups: dict[tuple[str, int | None], list[Segment]] = {}
    for seg in preictal:
        if seg.label != PREICTAL:
            raise ValueError("spans are reconstructed from preictal segments only")
        groups.setdefault((seg.record_id, seg.seizure), []).append(seg)
        length = seg.data.shape[1]
    spans = []
    for (record_id, seizure), segs in groups.items():
        segs = sorted(segs, key=lambda s: s.start_s)
        run = [segs[0]]
        for seg in segs[1:]:
            expected = round(run[-1].start_s * fs) + length
            if round(seg.start_s * fs) == expected:
                run.append(seg)
            else:
                spans.append(_close_span(run, record_id, seizure))
                run = [seg]
        spans.append(_close_span(run, record_id, seizure))
    return spans


def _close_span(run, record_id, seizure) -> Span:
    return Span(data=np.concatenate([s.data for s in run], axis=1),
                record_id=record_id, start_s=run[0].start_s, seizure=seizure)


def sliding_windows(spans, fs: int, window_s: float, stride_s: float) -> list[Segment]:
    """Windows at offsets 0, S, 2S, ... fully inside each span.

    Per span: floor((span_s - window_s) / stride_s) + 1 windows, zero when the
    window does not fit.
    """
    window = window_s * fs
    stride = stride_s * fs
    if window != int(window) or stride != int(stride):
        raise ValueError(f"window {window_s}s / stride {stride_s}s are not whole "
                         f"sample counts at {fs} Hz")
    window, stride = int(window), int(stride)
    out = []
    for span in spans:
        count = (span.samples - window) // stride + 1 if span.samples >= window else 0
        for i in range(count):
            lo = i * stride
            out.append(Segment(data=span.data[:, lo:lo + window].copy(),
                               label=PREICTAL, record_id=span.record_id,
                               start_s=span.start_s + lo / fs,
                               seizure=span.seizure))
    return out


def _pick_donors(pool_size: int, rng: np.random.Generator) -> np.ndarray:
    # three distinct donors when the pool allows it
    if pool_size >= 3:
        return rng.choice(pool_size, size=3, replace=False)
    return rng.integers(0, pool_size, size=3)


def recombine(pool, rng: np.random.Generator, count: int) -> list[Segment]:
    """Splice equal thirds of three donors from one seizure's pool."""
    if not pool:
        raise ValueError("recombination needs a non-empty preictal pool")
    length = pool[0].data.shape[1]
    cut1, cut2 = thirds(length)
    out = []
    for _ in range(count):
        a, b, c = (pool[i] for i in _pick_donors(len(pool), rng))
        data = np.concatenate([a.data[:, :cut1], b.data[:, cut1:cut2],
                               c.data[:, cut2:]], axis=1)
        out.append(Segment(data=data, label=PREICTAL, record_id=a.record_id,
                           start_s=a.start_s, seizure=a.seizure, synthetic=True))
    return out


def _seizure_pools(pre) -> list[list[Segment]]:
    pools: dict[int, list[Segment]] = {}
    for seg in pre:
        if seg.seizure is None:
            raise ValueError("preictal segments lack a seizure assignment")
        pools.setdefault(seg.seizure, []).append(seg)
    return [pools[k] for k in sorted(pools)]


def _share(total: int, parts: int) -> list[int]:
    base, rem = divmod(total, parts)
    return [base + (1 if i < rem else 0) for i in range(parts)]


def _conditioner(net, data: np.ndarray):
    window_len = 2 * (net.config.cond_bins - 1)
    return log_compress(stft_magnitude(data, window_len, net.config.hop))


def diffusion_augment(segments, net, sched, rng_pick: np.random.Generator,
                      rng_noise: np.random.Generator) -> list[Segment]:
    """Generate the preictal deficit; odd deficits give the extra sample to
    the real-spectrogram half (ceil) over the recombined half (floor)."""
    if net is None:
        raise ValueError("diffusion balancing needs a trained checkpoint")
    pre, inter = split_classes(segments)
    deficit = len(inter) - len(pre)
    if deficit < 0:
        raise ValueError(f"diffusion balancing needs interictal >= preictal, "
                         f"got {len(inter)} < {len(pre)}")
    if deficit == 0:
        return list(segments)
    if not pre:
        raise ValueError("cannot generate preictal data without preictal examples")
    n_random = math.ceil(deficit / 2)
    generated = []
    for _ in range(n_random):
        donor = pre[int(rng_pick.integers(0, len(pre)))]
        cond = _conditioner(net, donor.data)
        generated.append(_generated_segment(net, cond, sched, rng_noise, donor))
    pools = _seizure_pools(pre)
    for i in range(deficit - n_random):
        pool = pools[i % len(pools)]
        donors = [pool[j] for j in _pick_donors(len(pool), rng_pick)]
        cond = recombine_spectrograms(*(_conditioner(net, d.data) for d in donors),
                                      rng=rng_pick)
        generated.append(_generated_segment(net, cond, sched, rng_noise, donors[0]))
    return list(segments) + generated


def _generated_segment(net, cond, sched, rng_noise, donor: Segment) -> Segment:
    data = sample(net, cond, sched, rng_noise)
    return Segment(data=data, label=PREICTAL, record_id=donor.record_id,
                   start_s=donor.start_s, seizure=donor.seizure, synthetic=True)


def apply_plan(plan: BalancePlan, segments, *, fs: int, net=None, sched=None) -> list[Segment]:
    """Dispatch one balancing method; returns a class-balanced training list."""
    streams = named_streams(plan.seed, ("select", "donor", "noise"))
    pre, inter = split_classes(segments)
    if plan.method == "downsample":
        return downsample(segments, streams["select"])
    if len(pre) > len(inter):
        raise ValueError(f"{plan.method} grows the preictal class and needs "
                         f"interictal >= preictal, got {len(inter)} < {len(pre)}")
    if plan.method == "sliding_window":
        if not pre:
            raise ValueError("no preictal segments to slide over")
        length = pre[0].data.shape[1]
        if plan.window_s * fs != length:
            raise ValueError(f"window_s {plan.window_s} must match the segment "
                             f"length {length / fs} s")
        windows = sliding_windows(contiguous_spans(pre, fs, length / fs),
                                  fs, plan.window_s, plan.stride_s)
        if len(windows) < len(inter):
            raise ValueError(f"sliding produced {len(windows)} windows, "
                             f"fewer than {len(inter)} interictal segments")
        if len(windows) > len(inter):
            keep = set(streams["select"].choice(len(windows), size=len(inter),
                                                replace=False).tolist())
            windows = [w for i, w in enumerate(windows) if i in keep]
        return inter + windows
    if plan.method == "recombine":
        deficit = len(inter) - len(pre)
        pools = _seizure_pools(pre)
        made = []
        for pool, share in zip(pools, _share(deficit, len(pools))):
            made.extend(recombine(pool, streams["donor"], share))
        return list(segments) + made
    return diffusion_augment(segments, net, sched, streams["donor"], streams["noise"])
