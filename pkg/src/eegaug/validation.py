"""Input checking shared by the estimators.

Accepts either labeled Segment lists or bare (N, H, L) arrays with a separate
label vector, and normalizes both to float64 arrays.
"""

from __future__ import annotations

import numpy as np
from sklearn.exceptions import NotFittedError

from .dataset import INTERICTAL, PREICTAL, Segment


def unpack_dataset(X, y=None) -> tuple[np.ndarray, np.ndarray]:
    """Normalize to (arrays (N, H, L), labels (N,)); labels may come from
    the segments themselves when y is omitted."""
    arrays = segments_to_array(X)
    if y is None:
        if not (isinstance(X, (list, tuple)) and X and isinstance(X[0], Segment)):
            raise ValueError("labels are required when X is a bare array")
        y = [seg.label for seg in X]
    y = np.asarray(y)
    if y.shape != (arrays.shape[0],):
        raise ValueError(f"got {arrays.shape[0]} samples but {y.shape} labels")
    if not np.isin(y, (INTERICTAL, PREICTAL)).all():
        raise ValueError("labels must be 0 (interictal) or 1 (preictal)")
    return arrays, y.astype(np.int64)


def segments_to_array(X) -> np.ndarray:
    if isinstance(X, (list, tuple)):
        if not X:
            raise ValueError("empty dataset")
        if isinstance(X[0], Segment):
            shapes = {seg.data.shape for seg in X}
            if len(shapes) != 1:
                raise ValueError(f"segments disagree on geometry: {sorted(shapes)}")
            return np.stack([np.asarray(seg.data, dtype=np.float64) for seg in X])
    arrays = np.asarray(X, dtype=np.float64)
    if arrays.ndim == 2:
        arrays = arrays[None]
    if arrays.ndim != 3:
        raise ValueError(f"expected (N, H, L) samples, got shape {arrays.shape}")
    if arrays.shape[0] == 0:
        raise ValueError("empty dataset")
    return arrays


def require_both_classes(y: np.ndarray, what: str) -> None:
    present = set(np.unique(y).tolist())
    if present != {INTERICTAL, PREICTAL}:
        raise ValueError(f"{what} must contain both classes, got labels {sorted(present)}")


def check_fitted(estimator, attribute: str) -> None:
    if not hasattr(estimator, attribute):
        raise NotFittedError(f"{type(estimator).__name__} is not fitted yet; call fit first")


def check_geometry(arrays: np.ndarray, channels: int, length: int) -> None:
    if arrays.shape[1:] != (channels, length):
        raise ValueError(f"samples have shape {arrays.shape[1:]}, "
                         f"the fitted model expects {(channels, length)}")
