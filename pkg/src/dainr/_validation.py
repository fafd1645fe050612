"""Input checks shared by the estimators."""
from __future__ import annotations

import numbers

import numpy as np
from sklearn.utils import check_scalar

from .phantom import Acquisition


def check_acquisition(acq, min_frames: int = 1) -> Acquisition:
    if not isinstance(acq, Acquisition):
        raise TypeError(f"expected an Acquisition, got {type(acq).__name__}")
    if acq.n_frames < min_frames:
        raise ValueError(f"acquisition has {acq.n_frames} frame(s); at least {min_frames} required")
    if not np.all(np.isfinite(acq.kspace)):
        raise ValueError("acquisition contains non-finite samples")
    return acq


def check_sequence(d, name: str = "sequence") -> np.ndarray:
    d = np.asarray(d)
    if d.ndim != 3:
        raise ValueError(f"{name} must be (frames, height, width), got shape {d.shape}")
    if not np.all(np.isfinite(d)):
        raise ValueError(f"{name} contains non-finite values")
    return d


def check_frames(frames, n_frames: int) -> np.ndarray:
    if frames is None:
        return np.arange(n_frames)
    frames = np.atleast_1d(np.asarray(frames))
    if frames.size == 0:
        raise ValueError("no frames requested")
    if not np.issubdtype(frames.dtype, np.integer):
        raise TypeError("frame indices must be integers")
    if frames.min() < 0 or frames.max() >= n_frames:
        raise ValueError(f"frame indices must lie in [0, {n_frames})")
    return frames


def check_positive(value, name: str, target_type=numbers.Real, include_zero: bool = False):
    return check_scalar(value, name, target_type, min_val=0, include_boundaries="left" if include_zero else "neither")
