"""Scikit-learn style reconstructors.

Each estimator is fitted on an :class:`~dainr.phantom.Acquisition` and
``predict`` returns the reconstructed complex sequence ``(frames, H, W)``.
"""
from __future__ import annotations

import logging
import numbers
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_acquisition, check_frames, check_positive
from .baselines import HashINRModel, RegularizerWeights, frame_time, hashinr_optimize, zero_filled_recon
from .dataset import read_raw, write_raw
from .encodings import HashGridConfig
from .networks import DAINRModel, FeatureExtractor, load_checkpoint, save_checkpoint
from .training import TrainConfig, frame_features, train

log = logging.getLogger(__name__)


def _grid_config(est, image_size: int) -> HashGridConfig:
    growth, finest = est.growth_factor, est.finest_resolution
    if growth is None and finest is None:
        # images no larger than the coarsest level would otherwise give growth 1
        finest = max(image_size, 2 * est.coarsest_resolution)
    if finest is not None:
        growth = None
    return HashGridConfig(levels=est.n_levels, table_size=2**est.table_size_log2,
                          features_per_entry=est.features_per_entry, coarsest_resolution=est.coarsest_resolution,
                          growth_factor=growth, finest_resolution=finest)


def _intensity_scale(acq, transform: str) -> float:
    peak = float(np.abs(zero_filled_recon(acq, transform)).max())
    return 1.0 / peak if peak > 0 else 1.0


class ZeroFilledReconstructor(BaseEstimator):
    """Density-compensated adjoint NUFFT, coil-combined per frame. Nothing is trained."""

    def __init__(self, transform: str = "nufft"):
        self.transform = transform

    def fit(self, X, y=None):
        acq = check_acquisition(X)
        self.frames_ = zero_filled_recon(acq, self.transform)
        self.n_frames_ = acq.n_frames
        self.image_size_ = acq.image_size
        return self

    def predict(self, frames=None):
        check_is_fitted(self, "frames_")
        return self.frames_[check_frames(frames, self.n_frames_)]

    def fit_predict(self, X, y=None):
        return self.fit(X).predict()


class DAINRReconstructor(BaseEstimator):
    """Deformation-aware hash-grid INR fitted to undersampled radial k-space.

    With neither ``growth_factor`` nor ``finest_resolution`` set, the hash
    grid's finest level equals the image size (at least twice the coarsest). ``train_frames`` restricts the
    loss to a subset of frames (temporal interpolation); ``use_features``
    enables the frozen convolutional feature pathway.
    """

    def __init__(self, n_levels: int = 16, table_size_log2: int = 14, features_per_entry: int = 2,
                 coarsest_resolution: int = 16, growth_factor: float | None = None,
                 finest_resolution: int | None = None, hidden_width: int = 64, hidden_layers: int = 5,
                 spatial_bands: int = 10, temporal_bands: int = 6, use_features: bool = False,
                 feature_channels: int = 16, n_iter: int = 2000, learning_rate: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, weight_decay: float = 0.0, frame_schedule: str = "cyclic",
                 canonical_frame: int = 0, train_frames=None, resample: str = "lattice", normalize: bool = True,
                 dtype: str = "float32", transform: str = "nufft", early_stop_window: int = 200,
                 early_stop_tol: float = 1e-5, random_state: int = 0):
        self.n_levels = n_levels
        self.table_size_log2 = table_size_log2
        self.features_per_entry = features_per_entry
        self.coarsest_resolution = coarsest_resolution
        self.growth_factor = growth_factor
        self.finest_resolution = finest_resolution
        self.hidden_width = hidden_width
        self.hidden_layers = hidden_layers
        self.spatial_bands = spatial_bands
        self.temporal_bands = temporal_bands
        self.use_features = use_features
        self.feature_channels = feature_channels
        self.n_iter = n_iter
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.frame_schedule = frame_schedule
        self.canonical_frame = canonical_frame
        self.train_frames = train_frames
        self.resample = resample
        self.normalize = normalize
        self.dtype = dtype
        self.transform = transform
        self.early_stop_window = early_stop_window
        self.early_stop_tol = early_stop_tol
        self.random_state = random_state

    def _validate_params(self, n_frames: int):
        check_positive(self.n_iter, "n_iter", numbers.Integral)
        check_positive(self.learning_rate, "learning_rate")
        check_positive(self.weight_decay, "weight_decay", include_zero=True)
        if not 0 <= self.canonical_frame < n_frames:
            raise ValueError(f"canonical_frame must lie in [0, {n_frames})")
        if self.resample not in ("lattice", "nearest"):
            raise ValueError(f"resample must be 'lattice' or 'nearest', got {self.resample!r}")

    def fit(self, X, y=None):
        acq = check_acquisition(X, min_frames=2)
        self._validate_params(acq.n_frames)
        tau = acq.n_frames
        train_frames = None if self.train_frames is None else check_frames(self.train_frames, tau)
        self.scale_ = _intensity_scale(acq, self.transform) if self.normalize else 1.0
        scaled = acq.scaled(self.scale_)
        self.n_frames_ = tau
        self.image_size_ = acq.image_size
        self.canonical_time_ = float(frame_time(self.canonical_frame, tau))

        self.features_ = None
        n_feat = 0
        if self.use_features:
            held_out = train_frames is not None and len(train_frames) < tau
            extractor = FeatureExtractor(self.feature_channels, in_frames=2 if held_out else 1,
                                         seed=self.random_state)
            zf = zero_filled_recon(scaled, self.transform)
            self.features_ = frame_features(extractor, zf, range(tau), train_frames if held_out else None)
            self.extractor_ = extractor
            n_feat = extractor.channels

        self.model_ = DAINRModel(_grid_config(self, acq.image_size), self.hidden_width, self.hidden_layers,
                                 self.spatial_bands, self.temporal_bands, n_feat, self.canonical_time_,
                                 seed=self.random_state, dtype=np.dtype(self.dtype))
        cfg = TrainConfig(iterations=self.n_iter, lr=self.learning_rate, beta1=self.beta1, beta2=self.beta2,
                          eps=self.eps, weight_decay=self.weight_decay, seed=self.random_state,
                          schedule=self.frame_schedule,
                          train_frames=None if train_frames is None else tuple(int(f) for f in train_frames),
                          early_stop_window=self.early_stop_window, early_stop_tol=self.early_stop_tol,
                          transform=self.transform)
        result = train(self.model_, scaled, cfg, self.features_)
        self.loss_trace_ = result.trace
        self.n_iter_ = len(result.trace)
        self.stopped_early_ = result.stopped_early
        return self

    def predict(self, frames=None, scale: float = 1.0):
        """Reconstructed frames at ``scale`` times the acquired resolution."""
        check_is_fitted(self, "model_")
        frames = check_frames(frames, self.n_frames_)
        times = frame_time(np.arange(self.n_frames_), self.n_frames_)
        out = []
        for k in frames:
            feats = None if self.features_ is None else self.features_[int(k)]
            out.append(self.model_.render_frame(float(times[k]), self.image_size_, self.image_size_, scale, feats,
                                                self.resample))
        return np.stack(out).astype(np.complex128) / self.scale_

    def fit_predict(self, X, y=None):
        return self.fit(X).predict()

    def save(self, path) -> None:
        check_is_fitted(self, "model_")
        extra = {
            "estimator": self.get_params(),
            "scale": self.scale_,
            "n_frames": self.n_frames_,
            "image_size": self.image_size_,
        }
        if extra["estimator"]["train_frames"] is not None:
            extra["estimator"]["train_frames"] = [int(f) for f in extra["estimator"]["train_frames"]]
        if self.features_ is not None:
            extra["feature_frames"] = sorted(int(k) for k in self.features_)
        save_checkpoint(self.model_, path, extra)
        if self.features_ is not None:
            stack = np.stack([self.features_[k] for k in extra["feature_frames"]])
            extra["features"] = write_raw(Path(path) / "features.f32", stack)
            save_checkpoint(self.model_, path, extra)

    @classmethod
    def load(cls, path) -> "DAINRReconstructor":
        model, extra = load_checkpoint(path)
        est = cls(**extra["estimator"])
        est.model_ = model
        est.scale_ = float(extra["scale"])
        est.n_frames_ = int(extra["n_frames"])
        est.image_size_ = int(extra["image_size"])
        est.canonical_time_ = model.canonical_time
        est.features_ = None
        if "features" in extra:
            entry = extra["features"]
            stack = read_raw(Path(path) / entry["file"], entry["shape"], entry["complex"])
            est.features_ = {int(k): f for k, f in zip(extra["feature_frames"], stack)}
        return est


class HashINRReconstructor(BaseEstimator):
    """Direct space-time hash-grid INR with a squared-l2 data term and optional TV / low-rank penalties."""

    def __init__(self, n_levels: int = 16, table_size_log2: int = 14, features_per_entry: int = 2,
                 coarsest_resolution: int = 16, growth_factor: float | None = None,
                 finest_resolution: int | None = None, hidden_width: int = 64, hidden_layers: int = 5,
                 lambda_tv: float = 0.0, lambda_lowrank: float = 0.0, n_iter: int = 2000,
                 learning_rate: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                 weight_decay: float = 0.0, batch: str | None = None, train_frames=None, normalize: bool = True,
                 dtype: str = "float32", transform: str = "nufft", random_state: int = 0):
        self.n_levels = n_levels
        self.table_size_log2 = table_size_log2
        self.features_per_entry = features_per_entry
        self.coarsest_resolution = coarsest_resolution
        self.growth_factor = growth_factor
        self.finest_resolution = finest_resolution
        self.hidden_width = hidden_width
        self.hidden_layers = hidden_layers
        self.lambda_tv = lambda_tv
        self.lambda_lowrank = lambda_lowrank
        self.n_iter = n_iter
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.batch = batch
        self.train_frames = train_frames
        self.normalize = normalize
        self.dtype = dtype
        self.transform = transform
        self.random_state = random_state

    def fit(self, X, y=None):
        acq = check_acquisition(X, min_frames=2)
        check_positive(self.n_iter, "n_iter", numbers.Integral)
        check_positive(self.learning_rate, "learning_rate")
        weights = RegularizerWeights(self.lambda_tv, self.lambda_lowrank)
        self.scale_ = _intensity_scale(acq, self.transform) if self.normalize else 1.0
        self.n_frames_ = acq.n_frames
        self.image_size_ = acq.image_size
        frames = None if self.train_frames is None else check_frames(self.train_frames, acq.n_frames)
        self.model_ = HashINRModel(_grid_config(self, acq.image_size), self.hidden_width, self.hidden_layers,
                                   seed=self.random_state, dtype=np.dtype(self.dtype))
        result = hashinr_optimize(acq.scaled(self.scale_), self.model_, weights, self.n_iter, self.learning_rate,
                                  (self.beta1, self.beta2), self.eps, self.weight_decay, self.batch,
                                  self.random_state, self.transform, frames)
        self.loss_trace_ = result.trace
        self.n_iter_ = len(result.trace)
        return self

    def predict(self, frames=None):
        check_is_fitted(self, "model_")
        frames = check_frames(frames, self.n_frames_)
        times = frame_time(np.arange(self.n_frames_), self.n_frames_)
        out = [self.model_.render_frame(float(times[k]), self.image_size_) for k in frames]
        return np.stack(out).astype(np.complex128) / self.scale_

    def fit_predict(self, X, y=None):
        return self.fit(X).predict()
