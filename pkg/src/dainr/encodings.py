"""Frequency (sinusoidal) encoding and the multiresolution hash-grid encoding."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, as_tensor

# Per-axis multipliers of the spatial hash; axis 0 uses 1 so that the first
# coordinate stays coherent in memory.
HASH_PRIMES = (1, 2654435761, 805459861)


def frequency_encode_array(p, n_bands: int) -> np.ndarray:
    """Return ``[sin(2^0 pi p), cos(2^0 pi p), ..., sin(2^(I-1) pi p), cos(...)]``.

    ``p`` may be a scalar or an array; the bands are appended on a new trailing
    axis of length ``2 * n_bands``.
    """
    if n_bands < 1:
        raise ValueError(f"n_bands must be >= 1, got {n_bands}")
    p = np.asarray(p, dtype=np.result_type(np.asarray(p).dtype, np.float32))
    freqs = (2.0 ** np.arange(n_bands)) * np.pi
    arg = p[..., None] * freqs.astype(p.dtype)
    out = np.empty(p.shape + (2 * n_bands,), dtype=p.dtype)
    out[..., 0::2] = np.sin(arg)
    out[..., 1::2] = np.cos(arg)
    return out


def frequency_encode(x, n_bands: int) -> Tensor:
    """Encode every column of an ``(P, d)`` tensor and concatenate per column.

    Output shape is ``(P, d * 2 * n_bands)``; column ``j`` occupies the block
    ``[j * 2I, (j + 1) * 2I)``.
    """
    x = as_tensor(x)
    if x.data.ndim != 2:
        raise ValueError("frequency_encode expects a (points, dims) array")
    P, d = x.shape
    enc = frequency_encode_array(x.data, n_bands)  # (P, d, 2I)
    freqs = ((2.0 ** np.arange(n_bands)) * np.pi).astype(x.dtype)

    def _bw(g):
        g = g.reshape(P, d, 2 * n_bands)
        # d sin(w p)/dp = w cos(w p); d cos(w p)/dp = -w sin(w p)
        dsin = enc[..., 1::2] * freqs
        dcos = -enc[..., 0::2] * freqs
        return ((g[..., 0::2] * dsin + g[..., 1::2] * dcos).sum(axis=-1),)

    return Tensor.from_op(enc.reshape(P, d * 2 * n_bands), (x,), _bw)


@dataclass(frozen=True)
class HashGridConfig:
    """Level layout of a hash grid.

    Give either ``growth_factor`` or ``finest_resolution``; the latter derives
    the growth factor geometrically from the coarsest level.
    """

    levels: int = 16
    table_size: int = 2**14
    features_per_entry: int = 2
    coarsest_resolution: int = 16
    growth_factor: float | None = 2.0
    finest_resolution: int | None = None
    dims: int = 2

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if self.table_size < 1 or self.table_size & (self.table_size - 1):
            raise ValueError(f"table_size must be a power of two, got {self.table_size}")
        if self.features_per_entry < 1:
            raise ValueError("features_per_entry must be >= 1")
        if self.coarsest_resolution < 1:
            raise ValueError("coarsest_resolution must be >= 1")
        if self.dims not in (2, 3):
            raise ValueError("only 2-D and 3-D grids are supported")
        if self.finest_resolution is None and self.growth_factor is None:
            raise ValueError("need growth_factor or finest_resolution")
        if self.levels > 1 and self.growth <= 1.0:
            raise ValueError(f"growth factor must exceed 1, got {self.growth}")

    @property
    def growth(self) -> float:
        if self.finest_resolution is not None:
            if self.levels == 1:
                return 1.0
            return growth_factor(self.coarsest_resolution, self.finest_resolution, self.levels)
        return float(self.growth_factor)

    @property
    def output_dim(self) -> int:
        return self.levels * self.features_per_entry

    def resolutions(self) -> list[int]:
        return [grid_resolution(level, self) for level in range(self.levels)]


def growth_factor(coarsest: int, finest: int, levels: int) -> float:
    """Growth ratio of a geometric level schedule from ``coarsest`` to ``finest``."""
    if levels < 2:
        raise ValueError("need at least two levels to derive a growth factor")
    return math.exp((math.log(finest) - math.log(coarsest)) / (levels - 1))


def grid_resolution(level: int, cfg: HashGridConfig) -> int:
    """``floor(N_min * b**level)``."""
    if not 0 <= level < cfg.levels:
        raise IndexError(f"level {level} outside [0, {cfg.levels})")
    # the relative guard keeps e.g. 16 * (512/16)**(15/15) from flooring to 511
    return int(math.floor(cfg.coarsest_resolution * cfg.growth**level * (1.0 + 1e-12)))


def is_dense_level(level: int, cfg: HashGridConfig) -> bool:
    return (grid_resolution(level, cfg) + 1) ** cfg.dims <= cfg.table_size


def hash_index(cells, level: int, cfg: HashGridConfig) -> np.ndarray:
    """Table index of integer vertex coordinates ``cells`` (shape ``(..., dims)``).

    Levels whose vertex count fits the table use a dense row-major index with
    the first coordinate varying fastest; others use the XOR spatial hash.
    """
    cells = np.asarray(cells, dtype=np.int64)
    if cells.shape[-1] != cfg.dims:
        raise ValueError(f"expected {cfg.dims}-d cells, got trailing size {cells.shape[-1]}")
    res = grid_resolution(level, cfg)
    if np.any(cells < 0) or np.any(cells > res):
        raise ValueError(f"cell coordinates outside the level-{level} grid [0, {res}]")
    if (res + 1) ** cfg.dims <= cfg.table_size:
        idx = np.zeros(cells.shape[:-1], dtype=np.int64)
        stride = 1
        for axis in range(cfg.dims):
            idx += cells[..., axis] * stride
            stride *= res + 1
        return idx
    c = cells.astype(np.uint64)
    h = np.zeros(cells.shape[:-1], dtype=np.uint64)
    for axis in range(cfg.dims):
        h ^= c[..., axis] * np.uint64(HASH_PRIMES[axis])
    return (h & np.uint64(cfg.table_size - 1)).astype(np.int64)


def _corner_offsets(dims: int) -> np.ndarray:
    return np.array([[(k >> a) & 1 for a in range(dims)] for k in range(2**dims)], dtype=np.int64)


def hash_encode(coords, tables: Tensor, cfg: HashGridConfig) -> Tensor:
    """Interpolated multi-level features of points in ``[-1, 1]^dims``.

    ``coords`` is ``(P, dims)``; ``tables`` is ``(levels, table_size, F)``.
    Points outside the unit box are clamped (zero gradient along clamped
    axes). Returns ``(P, levels * F)``.
    """
    coords = as_tensor(coords)
    x = coords.data
    if x.ndim != 2 or x.shape[1] != cfg.dims:
        raise ValueError(f"coords must be (points, {cfg.dims}), got {x.shape}")
    if np.isnan(x).any():
        raise ValueError("NaN coordinate passed to hash_encode")
    L, T, F = tables.shape
    if (L, T, F) != (cfg.levels, cfg.table_size, cfg.features_per_entry):
        raise ValueError("table shape does not match the grid config")

    P = x.shape[0]
    dt = tables.dtype
    inside = (x >= -1.0) & (x <= 1.0)
    xc = np.clip(x, -1.0, 1.0)
    offsets = _corner_offsets(cfg.dims)
    n_corners = len(offsets)
    out = np.empty((P, L * F), dtype=dt)
    saved = []
    for level in range(L):
        res = grid_resolution(level, cfg)
        u = (xc + 1.0) * (0.5 * res)
        base = np.clip(np.floor(u).astype(np.int64), 0, res - 1)
        frac = (u - base).astype(dt)
        lin = np.stack([1.0 - frac, frac]).astype(dt)  # (2, P, dims)
        idx = hash_index(base[None, :, :] + offsets[:, None, :], level, cfg)  # (corners, P)
        wts = np.ones((n_corners, P), dtype=dt)
        for k, off in enumerate(offsets):
            for a in range(cfg.dims):
                wts[k] *= lin[off[a], :, a]
        feats = tables.data[level][idx]  # (corners, P, F)
        out[:, level * F:(level + 1) * F] = np.einsum("kp,kpf->pf", wts, feats)
        saved.append((res, idx, lin, wts, feats))

    def _bw(g):
        g = g.reshape(P, L, F)
        gt = np.zeros_like(tables.data)
        gx = np.zeros_like(x) if coords.requires_grad else None
        for level, (res, idx, lin, wts, feats) in enumerate(saved):
            gl = g[:, level, :]
            flat_idx = idx.ravel()
            for f in range(F):
                contrib = (wts * gl[:, f]).ravel()
                gt[level, :, f] = np.bincount(flat_idx, weights=contrib, minlength=T)
            if gx is not None:
                proj = np.einsum("pf,kpf->kp", gl, feats)  # (corners, P)
                for a in range(cfg.dims):
                    dw = np.zeros(P, dtype=dt)
                    for k, off in enumerate(offsets):
                        w = np.full(P, 1.0 if off[a] else -1.0, dtype=dt)
                        for b in range(cfg.dims):
                            if b != a:
                                w *= lin[off[b], :, b]
                        dw += w * proj[k]
                    gx[:, a] += dw * (0.5 * res)
        if gx is not None:
            gx *= inside
        return gx, gt

    return Tensor.from_op(out, (coords, tables), _bw)


class HashGrid:
    """Trainable feature tables plus their level layout."""

    def __init__(self, config: HashGridConfig, rng: np.random.Generator | None = None, dtype=np.float32,
                 init_scale: float = 1e-4):
        self.config = config
        rng = np.random.default_rng(0) if rng is None else rng
        shape = (config.levels, config.table_size, config.features_per_entry)
        data = rng.uniform(-init_scale, init_scale, size=shape).astype(dtype)
        self.tables = Tensor(data, requires_grad=True, name="hash_tables")

    @property
    def output_dim(self) -> int:
        return self.config.output_dim

    def encode(self, coords) -> Tensor:
        return hash_encode(coords, self.tables, self.config)

    def parameters(self) -> list[Tensor]:
        return [self.tables]
