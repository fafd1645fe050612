"""Spatial and temporal interpolation protocols."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import clone

from .estimators import DAINRReconstructor
from .phantom import Acquisition, retrospective_undersample
from .training import center_crop_kspace, kept_frames, low_resolution_coil_maps, low_resolution_size


@dataclass
class InterpolationResult:
    estimator: DAINRReconstructor
    frames: np.ndarray  # inference output
    train_size: int
    inference_size: int
    train_frames: np.ndarray
    scale: float = 1.0


def temporal_interpolation(acq: Acquisition, keep_every: int, estimator: DAINRReconstructor | None = None
                           ) -> InterpolationResult:
    """Train on frames ``0, k, 2k, ...`` and render every frame."""
    if acq.n_frames < 4:
        raise ValueError("temporal interpolation needs at least 4 frames")
    kept = kept_frames(acq.n_frames, keep_every)
    est = clone(estimator) if estimator is not None else DAINRReconstructor()
    est.set_params(train_frames=kept)
    est.fit(acq)
    return InterpolationResult(est, est.predict(), acq.image_size, acq.image_size, kept)


def spatial_interpolation(ground_truth: np.ndarray, coil_maps: np.ndarray, spokes_per_frame: int, factor: float,
                          estimator: DAINRReconstructor | None = None, start_index: int = 0,
                          simulate_with: str = "ndft") -> InterpolationResult:
    """Train on acquisitions simulated from center-cropped k-space, render at full size.

    The low-resolution ground truth keeps the field of view, so rendering at
    ``scale = N / n`` lands on the original pixel lattice.
    """
    gt = np.asarray(ground_truth)
    n_full = gt.shape[-1]
    n_low = low_resolution_size(n_full, factor)
    gt_low = center_crop_kspace(gt, n_low)
    maps_low = low_resolution_coil_maps(coil_maps, n_low)
    acq = retrospective_undersample(gt_low, maps_low, spokes_per_frame, start_index=start_index, method=simulate_with)
    est = clone(estimator) if estimator is not None else DAINRReconstructor()
    est.fit(acq)
    scale = n_full / n_low
    return InterpolationResult(est, est.predict(scale=scale), n_low, n_full, np.arange(gt.shape[0]), scale)


def train_interpolation(mode: str, factor, acquisition: Acquisition | None = None,
                        ground_truth: np.ndarray | None = None, coil_maps: np.ndarray | None = None,
                        spokes_per_frame: int | None = None, estimator: DAINRReconstructor | None = None,
                        **kwargs) -> InterpolationResult:
    if mode == "temporal":
        if acquisition is None:
            raise ValueError("temporal interpolation needs an acquisition")
        if float(factor) != int(factor):
            raise ValueError(f"temporal factor must be an integer, got {factor}")
        return temporal_interpolation(acquisition, int(factor), estimator)
    if mode == "spatial":
        if ground_truth is None or coil_maps is None or spokes_per_frame is None:
            raise ValueError("spatial interpolation needs ground truth, coil maps and a spoke count")
        return spatial_interpolation(ground_truth, coil_maps, spokes_per_frame, float(factor), estimator, **kwargs)
    raise ValueError(f"unknown interpolation mode {mode!r}; expected 'spatial' or 'temporal'")
