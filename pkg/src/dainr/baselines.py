"""Comparison methods: zero-filled gridding, temporal TV / nuclear-norm penalties, and HashINR."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encodings import HashGrid, HashGridConfig
from .networks import MLP, lattice_coords
from .phantom import Acquisition


def _as_sequence(d) -> np.ndarray:
    d = np.asarray(d)
    if d.ndim < 2:
        raise ValueError("expected a (frames, ...) sequence")
    return d


def temporal_tv(d) -> float:
    """Sum over frames and pixels of ``|d[t+1] - d[t]|`` (complex modulus)."""
    d = _as_sequence(d)
    if d.shape[0] < 2:
        raise ValueError("temporal TV needs at least two frames")
    return float(np.abs(np.diff(d, axis=0)).sum())


def casorati(d) -> np.ndarray:
    """``(pixels, frames)`` matrix with one vectorized frame per column."""
    d = _as_sequence(d)
    return d.reshape(d.shape[0], -1).T


def nuclear_norm(d) -> float:
    """Sum of singular values of the Casorati matrix."""
    try:
        s = np.linalg.svd(casorati(d), compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"SVD did not converge for sequence of shape {np.shape(d)}") from exc
    return float(s.sum())


def temporal_tv_tensor(seq: Tensor) -> Tensor:
    """Temporal TV of a ``(frames, pixels, 2)`` real/imaginary tensor."""
    if seq.shape[0] < 2:
        raise ValueError("temporal TV needs at least two frames")
    diff = seq.data[1:] - seq.data[:-1]
    mod = np.sqrt((diff**2).sum(axis=-1))

    def _bw(g):
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(mod[..., None] > 0, diff / mod[..., None], 0.0)
        gd = g * unit
        out = np.zeros_like(seq.data)
        out[1:] += gd
        out[:-1] -= gd
        return (out,)

    return Tensor.from_op(np.asarray(mod.sum(), dtype=seq.dtype), (seq,), _bw)


def nuclear_norm_tensor(seq: Tensor) -> Tensor:
    """Nuclear norm of a ``(frames, pixels, 2)`` tensor; backward uses ``U V^H``."""
    z = seq.data[..., 0].astype(np.float64) + 1j * seq.data[..., 1]
    try:
        u, s, vh = np.linalg.svd(z.T, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("SVD did not converge in nuclear-norm evaluation") from exc

    def _bw(g):
        sub = (u @ vh).T  # (frames, pixels)
        return (g * np.stack([sub.real, sub.imag], axis=-1).astype(seq.dtype),)

    return Tensor.from_op(np.asarray(s.sum(), dtype=seq.dtype), (seq,), _bw)


def zero_filled_recon(acq: Acquisition, method: str = "nufft") -> np.ndarray:
    """Density-compensated adjoint per frame, coil-combined with conjugate sensitivities."""
    frames = []
    for t in range(acq.n_frames):
        op = acq.operator(t, method)
        frames.append(op.adjoint(acq.kspace[t] * acq.density[t]))
    return np.stack(frames)


@dataclass
class RegularizerWeights:
    """Weights of the temporal-TV and low-rank penalties; both default to zero."""

    tv: float = 0.0
    low_rank: float = 0.0

    def __post_init__(self):
        if self.tv < 0 or self.low_rank < 0:
            raise ValueError("regularizer weights must be non-negative")

    @property
    def active(self) -> bool:
        return self.tv > 0 or self.low_rank > 0


def frame_time(k, n_frames: int):
    """Normalized time of frame index ``k`` in ``[-1, 1]``."""
    if n_frames < 2:
        return np.zeros_like(np.asarray(k, dtype=np.float64))
    return -1.0 + 2.0 * np.asarray(k, dtype=np.float64) / (n_frames - 1)


class HashINRModel:
    """Direct ``(x, y, t) -> (Re, Im)`` mapping through a 3-D hash grid and an MLP."""

    def __init__(self, grid: HashGridConfig | None = None, hidden_width: int = 64, hidden_layers: int = 5,
                 seed: int = 0, dtype=np.float32):
        base = grid if grid is not None else HashGridConfig()
        self.grid_config = replace(base, dims=3)
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        self.hash_grid = HashGrid(self.grid_config, rng, self.dtype)
        self.net = MLP(self.grid_config.output_dim, 2, hidden_width, hidden_layers, rng, self.dtype, name="hashinr")

    def parameters(self) -> list[Tensor]:
        return [self.hash_grid.tables] + self.net.parameters()

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def render(self, t: float, height: int, width: int | None = None) -> Tensor:
        width = height if width is None else width
        xy = lattice_coords(height, width)
        pts = np.concatenate([xy, np.full((xy.shape[0], 1), t)], axis=1).astype(self.dtype)
        return self.net(self.hash_grid.encode(pts))

    def render_frame(self, t: float, height: int, width: int | None = None) -> np.ndarray:
        width = height if width is None else width
        out = self.render(t, height, width).data
        return (out[:, 0] + 1j * out[:, 1]).reshape(height, width)


def data_term(rendered: Tensor, samples: np.ndarray, op, image_shape: tuple[int, int], norm: str = "l1") -> Tensor:
    """Per-coil k-space residual of a rendered ``(pixels, 2)`` frame, reduced by ``norm``.

    ``norm="l1"`` sums absolute values of real and imaginary parts;
    ``norm="l2sq"`` sums their squares.
    """
    n_coils = samples.shape[0]

    def fwd(z):
        return op.forward(z.reshape(image_shape)).ravel()

    def adj(y):
        return op.adjoint(y.reshape(n_coils, -1)).ravel()

    pred = ad.complex_linear(rendered, fwd, adj)
    target = np.stack([samples.real.ravel(), samples.imag.ravel()], axis=-1).astype(rendered.dtype)
    resid = ad.sub(pred, Tensor(target))
    if norm == "l1":
        return ad.abs_sum(resid)
    if norm == "l2sq":
        return ad.square_sum(resid)
    raise ValueError(f"unknown norm {norm!r}")


@dataclass
class OptimizeResult:
    trace: list[tuple[int, int, float]] = field(default_factory=list)


def hashinr_optimize(acq: Acquisition, model: HashINRModel, weights: RegularizerWeights | None = None,
                     iterations: int = 500, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8,
                     weight_decay: float = 0.0, batch: str | None = None, seed: int = 0,
                     transform: str = "nufft", frames=None) -> OptimizeResult:
    """Fit ``model`` to ``acq`` with a squared-l2 data term plus optional TV / low-rank penalties.

    ``batch="frame"`` takes one frame per step (cyclic order); ``"sequence"``
    renders every frame each step, which the penalties require.
    """
    weights = weights or RegularizerWeights()
    batch = batch or ("sequence" if weights.active else "frame")
    if batch not in ("frame", "sequence"):
        raise ValueError(f"unknown batch mode {batch!r}")
    if weights.active and batch != "sequence":
        raise ValueError("temporal penalties need batch='sequence'")
    n = acq.image_size
    tau = acq.n_frames
    frames = np.arange(tau) if frames is None else np.asarray(frames)
    times = frame_time(np.arange(tau), tau)
    opt = ad.AdamW(model.parameters(), lr=lr, betas=betas, eps=eps, weight_decay=weight_decay)
    result = OptimizeResult()
    for it in range(iterations):
        opt.zero_grad()
        if batch == "frame":
            k = int(frames[it % len(frames)])
            loss = data_term(model.render(times[k], n), acq.kspace[k], acq.operator(k, transform), (n, n), "l2sq")
        else:
            k = -1
            rendered = [model.render(times[f], n) for f in frames]
            loss = None
            for f, r in zip(frames, rendered):
                term = data_term(r, acq.kspace[f], acq.operator(int(f), transform), (n, n), "l2sq")
                loss = term if loss is None else ad.add(loss, term)
            if weights.active:
                seq = ad.concat([ad.reshape(r, (1,) + r.shape) for r in rendered], axis=0)
                if weights.tv:
                    loss = ad.add(loss, ad.mul(temporal_tv_tensor(seq), weights.tv))
                if weights.low_rank:
                    loss = ad.add(loss, ad.mul(nuclear_norm_tensor(seq), weights.low_rank))
        value = float(loss.data)
        if not np.isfinite(value):
            raise FloatingPointError(f"HashINR loss became {value} at iteration {it}")
        loss.backward()
        opt.step()
        result.trace.append((it, k, value))
    return result
