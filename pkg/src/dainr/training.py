"""Optimization loop of the deformation-aware model and the interpolation protocols."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .baselines import data_term, frame_time, zero_filled_recon
from .networks import DAINRModel, FeatureExtractor, save_checkpoint
from .phantom import Acquisition, cartesian_images, cartesian_kspace

log = logging.getLogger(__name__)


class TrainingDiverged(FloatingPointError):
    """Raised when the loss or a gradient stops being finite."""


@dataclass
class TrainConfig:
    iterations: int = 2000
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    seed: int = 0
    schedule: str = "cyclic"
    train_frames: tuple[int, ...] | None = None
    early_stop_window: int = 200
    early_stop_tol: float = 1e-5
    transform: str = "nufft"
    checkpoint_dir: str | None = None
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.schedule not in ("cyclic", "random"):
            raise ValueError(f"unknown frame schedule {self.schedule!r}")


@dataclass
class TrainResult:
    trace: list[tuple[int, int, float]] = field(default_factory=list)
    stopped_early: bool = False

    @property
    def losses(self) -> np.ndarray:
        return np.array([row[2] for row in self.trace])


def dainr_loss(rendered, samples: np.ndarray, op, image_shape: tuple[int, int]) -> ad.Tensor:
    """Sum over coils of the l1 norm of the k-space residual (real and imaginary parts)."""
    return data_term(rendered, samples, op, image_shape, "l1")


def neighbor_frames(t: int, kept: np.ndarray) -> tuple[int, int]:
    """The two kept frames closest to ``t``, ``t`` itself excluded, in time order."""
    others = [int(k) for k in kept if k != t]
    if len(others) < 2:
        raise ValueError("need at least two kept frames besides the queried one")
    others.sort(key=lambda k: (abs(k - t), k))
    a, b = sorted(others[:2])
    return a, b


def frame_features(extractor: FeatureExtractor | None, zero_filled: np.ndarray, frames,
                   kept: np.ndarray | None = None) -> dict[int, np.ndarray]:
    """Extractor output per frame; with ``kept`` given, built from the two nearest kept neighbors."""
    if extractor is None:
        raise ValueError("no feature extractor configured")
    out = {}
    for t in frames:
        t = int(t)
        if kept is None:
            out[t] = extractor(zero_filled[t])
        else:
            a, b = neighbor_frames(t, kept)
            out[t] = extractor([zero_filled[a], zero_filled[b]])
    return out


def _moving_plateau(losses: list[float], window: int, tol: float) -> bool:
    if window <= 0 or len(losses) < 2 * window:
        return False
    recent = float(np.mean(losses[-window:]))
    before = float(np.mean(losses[-2 * window:-window]))
    return abs(before - recent) <= tol * abs(before)


def train(model: DAINRModel, acq: Acquisition, cfg: TrainConfig | None = None,
          features: dict[int, np.ndarray] | None = None, callback=None) -> TrainResult:
    """Fit ``model`` to ``acq`` one full frame per step.

    Each step renders the chosen frame on the lattice at scale 1, evaluates the
    l1 k-space loss and applies one AdamW update. On a non-finite loss the
    parameters are restored to the last finite state and
    :class:`TrainingDiverged` is raised.
    """
    cfg = cfg or TrainConfig()
    tau = acq.n_frames
    if tau < 2:
        raise ValueError("training needs at least two frames")
    frames = np.arange(tau) if cfg.train_frames is None else np.asarray(cfg.train_frames, dtype=int)
    if len(frames) < 1 or frames.min() < 0 or frames.max() >= tau:
        raise ValueError("train_frames out of range")
    if model.feature_channels and features is None:
        raise ValueError("model uses image features but none were supplied")
    n = acq.image_size
    times = frame_time(np.arange(tau), tau)
    rng = np.random.default_rng(cfg.seed)
    opt = ad.AdamW(model.parameters(), lr=cfg.lr, betas=(cfg.beta1, cfg.beta2), eps=cfg.eps,
                   weight_decay=cfg.weight_decay)
    result = TrainResult()
    losses: list[float] = []
    for it in range(cfg.iterations):
        if cfg.schedule == "cyclic":
            k = int(frames[it % len(frames)])
        else:
            k = int(rng.choice(frames))
        snapshot = [p.data.copy() for p in opt.params]
        opt.zero_grad()
        rendered = model.render(times[k], n, n, 1.0, features[k] if features is not None else None)
        loss = dainr_loss(rendered, acq.kspace[k], acq.operator(k, cfg.transform), (n, n))
        value = float(loss.data)
        if not np.isfinite(value):
            raise TrainingDiverged(f"loss became {value} at iteration {it} (frame {k})")
        loss.backward()
        try:
            opt.step()
        except FloatingPointError as exc:
            for p, s in zip(opt.params, snapshot):
                p.data = s
            raise TrainingDiverged(str(exc)) from exc
        result.trace.append((it, k, value))
        losses.append(value)
        if callback is not None:
            callback(it, k, value)
        if cfg.checkpoint_dir and cfg.checkpoint_every and (it + 1) % cfg.checkpoint_every == 0:
            save_checkpoint(model, cfg.checkpoint_dir, {"iteration": it + 1})
        # per-frame losses differ, so compare averages over whole windows
        if (it + 1) % max(1, len(frames)) == 0 and _moving_plateau(losses, cfg.early_stop_window, cfg.early_stop_tol):
            log.info("loss plateau reached at iteration %d", it + 1)
            result.stopped_early = True
            break
    return result


def write_loss_trace(trace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "frame", "loss"])
        for it, k, value in trace:
            w.writerow([it, k, repr(float(value))])


# ---------------------------------------------------------------------------
# interpolation protocols

SPATIAL_FACTORS = (1.2, 1.5, 2.0)
TEMPORAL_FACTORS = (2, 3)


def kept_frames(n_frames: int, keep_every: int) -> np.ndarray:
    """Evenly subsampled frame indices ``0, k, 2k, ...``."""
    if keep_every not in TEMPORAL_FACTORS:
        raise ValueError(f"temporal factor must be one of {TEMPORAL_FACTORS}, got {keep_every}")
    return np.arange(0, n_frames, keep_every)


def low_resolution_size(image_size: int, factor: float) -> int:
    if not any(np.isclose(factor, f) for f in SPATIAL_FACTORS):
        raise ValueError(f"spatial factor must be one of {SPATIAL_FACTORS}, got {factor}")
    # nearest even size keeps the k-space center on a sample
    return 2 * int(round(image_size / factor / 2.0))


def center_crop_kspace(images: np.ndarray, size: int) -> np.ndarray:
    """Low-resolution images of the same field of view from the central ``size x size`` k-space block.

    Intensities are rescaled so a constant image keeps its value.
    """
    n = images.shape[-1]
    k = cartesian_kspace(images)
    lo = n // 2 - size // 2
    crop = k[..., lo:lo + size, lo:lo + size]
    return cartesian_images(crop) * (size / n) ** 2


def low_resolution_coil_maps(coil_maps: np.ndarray, size: int) -> np.ndarray:
    maps = center_crop_kspace(coil_maps, size)
    return maps / np.sqrt((np.abs(maps) ** 2).sum(axis=0))
