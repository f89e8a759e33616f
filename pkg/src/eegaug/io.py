"""On-disk formats: segment stores, annotation CSVs and checkpoints.

Segment store layout (all little-endian):
    magic "EEGS", version u16, H u16, fs u32, L u32, count u32,
    then per segment: label u8, start_s f64, data f32 [H][L].
The label byte is a bitfield: bit 0 = class (1 preictal), bit 1 = synthetic,
so plain real data uses exactly the values 0 and 1.

Checkpoint layout: a text manifest (magic line, `meta <key> <int>` lines,
`tensor <name> <dim>...` lines, `END`), then every tensor's float64
little-endian bytes concatenated in manifest order.  The payload length must
equal 8 times the sum of the shape products.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .dataset import INTERICTAL, PREICTAL, Segment
from .errors import DataFormatError

STORE_MAGIC = b"EEGS"
STORE_VERSION = 1
_HEADER = struct.Struct("<4sHHIII")
_SEG_PREFIX = struct.Struct("<Bd")

CKPT_MAGIC = "EEGCKPT 1"
_CKPT_END = b"\nEND\n"

ANNOTATION_HEADER = ["record_id", "onset_s", "offset_s"]


def write_segments(path, segments: list[Segment], fs: int) -> None:
    """Serialize segments (uniform geometry) to a store file."""
    if not segments:
        raise ValueError("refusing to write an empty segment store")
    if not 0 < int(fs) <= 0xFFFFFFFF:
        raise ValueError(f"sample rate {fs} outside u32 range")
    h, length = segments[0].data.shape
    if not 0 < h <= 0xFFFF:
        raise ValueError(f"channel count {h} outside u16 range")
    parts = [_HEADER.pack(STORE_MAGIC, STORE_VERSION, h, int(fs), length, len(segments))]
    for seg in segments:
        if seg.data.shape != (h, length):
            raise ValueError(
                f"segment shape {seg.data.shape} differs from store geometry {(h, length)}")
        if seg.label not in (INTERICTAL, PREICTAL):
            raise ValueError(f"unencodable label {seg.label!r}")
        label_byte = (seg.label & 1) | (int(bool(seg.synthetic)) << 1)
        parts.append(_SEG_PREFIX.pack(label_byte, float(seg.start_s)))
        parts.append(np.ascontiguousarray(seg.data, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_segments(path, record_id: str | None = None) -> tuple[list[Segment], int]:
    """Parse a store file; returns (segments, sample_rate).

    Stored data is float32; it is widened back to float64 in memory, so a
    read/write cycle reproduces the file bytes exactly.
    """
    raw = Path(path).read_bytes()
    name = str(path)
    if record_id is None:
        record_id = Path(path).stem
    if len(raw) < _HEADER.size:
        raise DataFormatError(f"{name}: truncated segment store header")
    magic, version, h, fs, length, count = _HEADER.unpack_from(raw, 0)
    if magic != STORE_MAGIC:
        raise DataFormatError(f"{name}: not a segment store (bad magic {magic!r})")
    if version != STORE_VERSION:
        raise DataFormatError(f"{name}: unsupported segment store version {version}")
    if h == 0 or length == 0 or fs == 0:
        raise DataFormatError(f"{name}: degenerate store geometry H={h} L={length} fs={fs}")
    seg_bytes = _SEG_PREFIX.size + h * length * 4
    expected = _HEADER.size + count * seg_bytes
    if len(raw) < expected:
        raise DataFormatError(f"{name}: truncated segment store "
                              f"({len(raw)} bytes, expected {expected})")
    if len(raw) > expected:
        raise DataFormatError(f"{name}: {len(raw) - expected} trailing bytes after segment data")
    segments = []
    offset = _HEADER.size
    for _ in range(count):
        label_byte, start_s = _SEG_PREFIX.unpack_from(raw, offset)
        if label_byte > 3:
            raise DataFormatError(f"{name}: label byte {label_byte} out of range")
        data = np.frombuffer(raw, dtype="<f4", count=h * length,
                             offset=offset + _SEG_PREFIX.size)
        segments.append(Segment(data=data.reshape(h, length).astype(np.float64),
                                label=label_byte & 1, record_id=record_id,
                                start_s=start_s, synthetic=bool(label_byte >> 1)))
        offset += seg_bytes
    return segments, int(fs)


def write_annotations(path, per_record: dict[str, list[tuple[float, float]]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ANNOTATION_HEADER)
        for record_id, spans in per_record.items():
            for onset, offset in spans:
                writer.writerow([record_id, repr(float(onset)), repr(float(offset))])


def read_annotations(path) -> dict[str, list[tuple[float, float]]]:
    name = str(path)
    per_record: dict[str, list[tuple[float, float]]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ANNOTATION_HEADER:
            raise DataFormatError(f"{name}: expected header {','.join(ANNOTATION_HEADER)!r}, "
                                  f"got {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise DataFormatError(f"{name}:{lineno}: expected 3 columns, got {len(row)}")
            record_id, onset_txt, offset_txt = row
            try:
                onset, offset = float(onset_txt), float(offset_txt)
            except ValueError:
                raise DataFormatError(f"{name}:{lineno}: non-numeric onset/offset") from None
            if offset <= onset:
                raise DataFormatError(f"{name}:{lineno}: offset {offset} <= onset {onset}")
            per_record.setdefault(record_id, []).append((onset, offset))
    return per_record


def save_checkpoint(path, tensors: dict[str, np.ndarray], meta: dict[str, int]) -> None:
    lines = [CKPT_MAGIC]
    for key, value in meta.items():
        if " " in key or "\n" in key:
            raise ValueError(f"meta key {key!r} contains whitespace")
        lines.append(f"meta {key} {int(value)}")
    payload = []
    for name, arr in tensors.items():
        if any(ch.isspace() for ch in name):
            raise ValueError(f"tensor name {name!r} contains whitespace")
        arr = np.asarray(arr, dtype=np.float64)
        lines.append(" ".join(["tensor", name] + [str(d) for d in arr.shape]))
        payload.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    blob = "\n".join(lines).encode() + _CKPT_END + b"".join(payload)
    Path(path).write_bytes(blob)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict[str, int]]:
    name = str(path)
    raw = Path(path).read_bytes()
    cut = raw.find(_CKPT_END)
    if cut < 0:
        raise DataFormatError(f"{name}: missing END marker; not a checkpoint")
    try:
        manifest = raw[:cut].decode()
    except UnicodeDecodeError:
        raise DataFormatError(f"{name}: manifest is not valid text") from None
    payload = raw[cut + len(_CKPT_END):]
    lines = manifest.split("\n")
    if not lines or lines[0] != CKPT_MAGIC:
        raise DataFormatError(f"{name}: not a checkpoint file "
                              f"(first line {lines[0][:30]!r})")
    meta: dict[str, int] = {}
    shapes: list[tuple[str, tuple[int, ...]]] = []
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split(" ")
        if fields[0] == "meta" and len(fields) == 3:
            try:
                meta[fields[1]] = int(fields[2])
            except ValueError:
                raise DataFormatError(f"{name}:{lineno}: non-integer meta value") from None
        elif fields[0] == "tensor" and len(fields) >= 2:
            try:
                dims = tuple(int(d) for d in fields[2:])
            except ValueError:
                raise DataFormatError(f"{name}:{lineno}: non-integer dimension") from None
            if any(d < 0 for d in dims):
                raise DataFormatError(f"{name}:{lineno}: negative dimension")
            shapes.append((fields[1], dims))
        else:
            raise DataFormatError(f"{name}:{lineno}: unrecognized manifest line {line!r}")
    total = sum(int(np.prod(dims, dtype=np.int64)) for _, dims in shapes)
    if len(payload) != 8 * total:
        raise DataFormatError(f"{name}: payload is {len(payload)} bytes, "
                              f"manifest requires {8 * total}")
    tensors: dict[str, np.ndarray] = {}
    offset = 0
    for tensor_name, dims in shapes:
        n = int(np.prod(dims, dtype=np.int64))
        if tensor_name in tensors:
            raise DataFormatError(f"{name}: duplicate tensor {tensor_name!r}")
        tensors[tensor_name] = np.frombuffer(payload, dtype="<f8", count=n,
                                             offset=offset).reshape(dims).copy()
        offset += 8 * n
    return tensors, meta


def write_loss_trace(path, trace: list[float], start: int = 1) -> None:
    """One row per iteration; `start` lets resumed runs keep counting."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "loss"])
        for i, value in enumerate(trace, start=start):
            writer.writerow([i, repr(float(value))])
