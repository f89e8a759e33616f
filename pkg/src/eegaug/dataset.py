"""Recording ingestion: segment labeling, seizure merging, admission, folds.

Labeling grammar (all windows are segment_seconds long, partial windows are
dropped, nothing overlaps an ictal interval):

  preictal    tiles [onset - preictal_minutes, onset), grid anchored at the
              nominal window start, clipped to the recording and to the
              previous merged seizure's offset
  interictal  tiles the complement of [onset - gap, offset + gap] around
              every merged seizure
  everything else (ictal, postictal, the belts around seizures) is discarded

All window arithmetic happens in integer sample indices to keep tiling exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError

INTERICTAL = 0
PREICTAL = 1


@dataclass
class Recording:
    """One continuous multichannel acquisition with seizure annotations."""

    id: str
    fs: int
    samples: np.ndarray  # (channels, total_samples) float64
    annotations: list[tuple[float, float]] = field(default_factory=list)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2:
            raise ValueError(f"samples must be (channels, total), got {self.samples.shape}")
        prev_off = 0.0
        for onset, offset in self.annotations:
            if onset >= offset:
                raise ValueError(f"annotation ({onset}, {offset}) is empty or reversed")
            if onset < prev_off:
                raise ValueError("annotations must be sorted and non-overlapping")
            prev_off = offset
        if self.annotations and self.annotations[-1][1] > self.duration_s:
            raise ValueError("annotation extends past the recording")

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return self.samples.shape[1] / self.fs


@dataclass
class Segment:
    """Fixed-length labeled window; the unit the whole pipeline moves around."""

    data: np.ndarray  # (channels, length) float64
    label: int  # INTERICTAL or PREICTAL
    record_id: str
    start_s: float
    seizure: int | None = None  # index of the merged seizure a preictal window precedes
    synthetic: bool = False

    def __post_init__(self):
        if self.label not in (INTERICTAL, PREICTAL):
            raise ValueError(f"label must be {INTERICTAL} or {PREICTAL}, got {self.label}")


@dataclass(frozen=True)
class DatasetSpec:
    """Labeling and admission parameters."""

    preictal_minutes: float = 30.0
    interictal_gap_hours: float = 4.0
    merge_gap_minutes: float = 15.0
    min_seizures: int = 3  # admitted iff count > min_seizures
    max_seizures_per_day: float = 10.0  # admitted iff rate < max
    min_inter_pre_ratio: float = 2.0  # admitted iff ratio > min
    segment_seconds: float = 30.0

    def __post_init__(self):
        for name in ("preictal_minutes", "interictal_gap_hours", "merge_gap_minutes",
                     "min_seizures", "max_seizures_per_day", "min_inter_pre_ratio",
                     "segment_seconds"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def segment_samples(self, fs: int) -> int:
        exact = fs * self.segment_seconds
        if abs(exact - round(exact)) > 1e-9:
            raise ConfigError(
                f"segment_seconds {self.segment_seconds} at {fs} Hz is not a whole sample count"
            )
        return int(round(exact))


def merge_seizures(annotations: list[tuple[float, float]],
                   merge_gap_minutes: float) -> list[tuple[float, float]]:
    """Absorb any seizure starting < merge_gap after the previous one ends.

    The combined event keeps the leading onset and the last offset; merging is
    transitive along a chain of close seizures.
    """
    gap_s = merge_gap_minutes * 60.0
    merged: list[tuple[float, float]] = []
    for onset, offset in annotations:
        if merged and onset - merged[-1][1] < gap_s:
            merged[-1] = (merged[-1][0], max(merged[-1][1], offset))
        else:
            merged.append((onset, offset))
    return merged


def _tile(lo: int, hi: int, length: int, anchor: int) -> list[int]:
    """Start indices of full windows on the anchor grid inside [lo, hi)."""
    if hi - lo < length:
        return []
    j = -(-(lo - anchor) // length)  # ceil division
    starts = []
    while anchor + (j + 1) * length <= hi:
        starts.append(anchor + j * length)
        j += 1
    return starts


def label_segments(rec: Recording, spec: DatasetSpec) -> list[Segment]:
    """Extract every preictal and interictal window of one recording."""
    length = spec.segment_samples(rec.fs)
    total = rec.samples.shape[1]
    merged = merge_seizures(rec.annotations, spec.merge_gap_minutes)
    on_i = [int(round(on * rec.fs)) for on, _ in merged]
    off_i = [int(round(off * rec.fs)) for _, off in merged]
    segments: list[Segment] = []

    pre_len = int(round(spec.preictal_minutes * 60.0 * rec.fs))
    for idx in range(len(merged)):
        anchor = on_i[idx] - pre_len
        lo = max(0, anchor, off_i[idx - 1] if idx else 0)
        for start in _tile(lo, min(on_i[idx], total), length, anchor):
            segments.append(Segment(
                data=rec.samples[:, start:start + length].copy(),
                label=PREICTAL, record_id=rec.id,
                start_s=start / rec.fs, seizure=idx,
            ))

    gap_len = int(round(spec.interictal_gap_hours * 3600.0 * rec.fs))
    cursor = 0
    exclusions = [(max(0, o - gap_len), min(total, f + gap_len)) for o, f in zip(on_i, off_i)]
    for lo, hi in exclusions + [(total, total)]:
        for start in _tile(cursor, min(lo, total), length, cursor):
            segments.append(Segment(
                data=rec.samples[:, start:start + length].copy(),
                label=INTERICTAL, record_id=rec.id,
                start_s=start / rec.fs, seizure=None,
            ))
        cursor = max(cursor, hi)

    segments.sort(key=lambda s: s.start_s)
    return segments


def assign_seizures(segments: list[Segment], annotations: list[tuple[float, float]],
                    spec: DatasetSpec) -> list[Segment]:
    """Re-attach preictal windows to their merged seizure after a store load."""
    merged = merge_seizures(annotations, spec.merge_gap_minutes)
    pre_s = spec.preictal_minutes * 60.0
    out = []
    for seg in segments:
        if seg.label != PREICTAL or seg.synthetic:
            out.append(seg)
            continue
        owner = None
        for idx, (onset, _) in enumerate(merged):
            if onset - pre_s - 1e-6 <= seg.start_s and seg.start_s + spec.segment_seconds <= onset + 1e-6:
                owner = idx
                break
        if owner is None:
            raise ValueError(f"preictal segment at {seg.start_s}s matches no annotated seizure")
        out.append(replace(seg, seizure=owner))
    return out


@dataclass(frozen=True)
class AdmissionReport:
    admitted: bool
    n_seizures: int
    seizures_per_day: float
    inter_pre_ratio: float
    n_interictal: int
    n_preictal: int
    violated: tuple[str, ...]


def admit_patient(recordings: list[Recording], spec: DatasetSpec) -> AdmissionReport:
    """Apply the three admission filters and report any violated predicate."""
    n_seizures = sum(len(merge_seizures(r.annotations, spec.merge_gap_minutes))
                     for r in recordings)
    total_days = sum(r.duration_s for r in recordings) / 86400.0
    rate = n_seizures / total_days if total_days > 0 else float("inf")
    n_pre = n_inter = 0
    for rec in recordings:
        for seg in label_segments(rec, spec):
            if seg.label == PREICTAL:
                n_pre += 1
            else:
                n_inter += 1
    if n_pre > 0:
        ratio = n_inter / n_pre
    else:
        ratio = float("inf") if n_inter else 0.0

    violated = []
    if not n_seizures > spec.min_seizures:
        violated.append(f"seizure count {n_seizures} not > {spec.min_seizures}")
    if not rate < spec.max_seizures_per_day:
        violated.append(f"seizure rate {rate:.2f}/day not < {spec.max_seizures_per_day}")
    if not ratio > spec.min_inter_pre_ratio:
        violated.append(f"interictal:preictal ratio {ratio:.2f} not > {spec.min_inter_pre_ratio}")
    return AdmissionReport(
        admitted=not violated, n_seizures=n_seizures, seizures_per_day=rate,
        inter_pre_ratio=ratio, n_interictal=n_inter, n_preictal=n_pre,
        violated=tuple(violated),
    )


@dataclass
class Fold:
    """One leave-one-seizure-out split; val is the later quarter of train."""

    index: int
    train: list[Segment]
    val: list[Segment]
    test: list[Segment]


def _chronological(segments: list[Segment]) -> list[Segment]:
    return sorted(segments, key=lambda s: (s.record_id, s.start_s))


def _split_later_quarter(segments: list[Segment]) -> tuple[list[Segment], list[Segment]]:
    """Chronologically later 25% (at least one when possible) goes to validation."""
    ordered = _chronological(segments)
    n = len(ordered)
    if n < 2:
        return ordered, []
    n_val = min(n - 1, max(1, int(n * 0.25)))
    return ordered[:-n_val], ordered[-n_val:]


def make_folds(segments: list[Segment], n_seizures: int | None = None) -> list[Fold]:
    """Leave-one-seizure-out folds.

    Fold i tests preictal block i plus the i-th of N equal contiguous
    chronological interictal parts; the rest trains, with the later 25% of
    each class reserved for validation.
    """
    pre = [s for s in segments if s.label == PREICTAL]
    inter = _chronological([s for s in segments if s.label == INTERICTAL])
    if any(s.seizure is None for s in pre):
        raise ValueError("preictal segments must carry their seizure index")
    blocks: dict[int, list[Segment]] = {}
    for s in pre:
        blocks.setdefault(s.seizure, []).append(s)
    n = len(blocks)
    if n_seizures is not None and n_seizures != n:
        raise ValueError(f"dataset has {n} seizures with preictal data, expected {n_seizures}")
    if n < 2:
        raise ValueError(f"need at least 2 seizures for leave-one-out folds, got {n}")

    parts = [list(part) for part in np.array_split(np.arange(len(inter)), n)]
    folds = []
    for i, key in enumerate(sorted(blocks)):
        test = blocks[key] + [inter[j] for j in parts[i]]
        train_pre = [s for k in sorted(blocks) if k != key for s in blocks[k]]
        train_inter = [inter[j] for i2, part in enumerate(parts) if i2 != i for j in part]
        tr_p, va_p = _split_later_quarter(train_pre)
        tr_i, va_i = _split_later_quarter(train_inter)
        folds.append(Fold(index=i, train=_chronological(tr_p + tr_i),
                          val=_chronological(va_p + va_i), test=_chronological(test)))
    return folds
