"""Radial multi-coil MRI measurement model.

Conventions: image pixels sit at integer coordinates centered on the image
midpoint (pixel ``n`` has coordinate ``n - N // 2``); k-space coordinates are
angular frequencies in ``[-pi, pi)`` and a sample is
``s(k) = sum_x image(x) exp(-i k . x)``. Images are indexed ``[y, x]`` and
k-space points are stored as ``(kx, ky)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.special import i0

GOLDEN_ANGLE_DEG = 111.25


def acceleration_factor(image_size: int, spokes_per_frame: int) -> float:
    """Lines needed for full sampling divided by acquired spokes."""
    if spokes_per_frame < 1:
        raise ValueError("spokes_per_frame must be >= 1")
    return image_size / spokes_per_frame


@dataclass
class Trajectory:
    """Radial sample locations of one frame."""

    angles: np.ndarray  # (spokes,) radians
    coords: np.ndarray  # (spokes * samples_per_spoke, 2) as (kx, ky)
    density: np.ndarray  # (spokes * samples_per_spoke,)
    samples_per_spoke: int

    @property
    def spokes(self) -> int:
        return len(self.angles)

    @property
    def n_samples(self) -> int:
        return self.coords.shape[0]


def golden_angle(index) -> np.ndarray:
    """Angle in radians of the ``index``-th spoke of a continuous golden-angle sequence."""
    deg = np.mod(np.asarray(index, dtype=np.float64) * GOLDEN_ANGLE_DEG, 180.0)
    return np.deg2rad(deg)


def radial_density(radii: np.ndarray, spokes: int, samples_per_spoke: int) -> np.ndarray:
    """Area of k-space represented by each sample, divided by ``(2 pi)^2``.

    Off-center samples get the ramp ``|k| dk pi / spokes``; the center sample,
    shared by every spoke, gets its share of the disk of radius ``dk / 2``.
    """
    dk = 2.0 * np.pi / samples_per_spoke
    w = np.abs(radii) * dk * np.pi / spokes
    center = np.isclose(radii, 0.0, atol=1e-12)
    w[center] = np.pi * (dk / 2.0) ** 2 / spokes
    return w / (4.0 * np.pi**2)


def radial_trajectory(angles: np.ndarray, samples_per_spoke: int) -> Trajectory:
    angles = np.asarray(angles, dtype=np.float64)
    radii = -np.pi + 2.0 * np.pi * np.arange(samples_per_spoke) / samples_per_spoke
    kx = np.cos(angles)[:, None] * radii[None, :]
    ky = np.sin(angles)[:, None] * radii[None, :]
    coords = np.stack([kx.ravel(), ky.ravel()], axis=-1)
    density = np.tile(radial_density(radii, len(angles), samples_per_spoke), len(angles))
    return Trajectory(angles=angles, coords=coords, density=density, samples_per_spoke=samples_per_spoke)


def golden_angle_trajectory(frame: int, spokes_per_frame: int, image_size: int,
                            samples_per_spoke: int | None = None, start_index: int = 0) -> Trajectory:
    """Trajectory of ``frame`` in a continuous golden-angle acquisition.

    Spoke ``j`` of frame ``k`` is the ``start_index + k * spokes_per_frame + j``-th
    spoke of the sequence; angles are reduced modulo 180 degrees.
    """
    if spokes_per_frame < 1:
        raise ValueError("spokes_per_frame must be >= 1")
    if frame < 0:
        raise ValueError("frame must be >= 0")
    n = samples_per_spoke or image_size
    first = start_index + frame * spokes_per_frame
    return radial_trajectory(golden_angle(first + np.arange(spokes_per_frame)), n)


def pixel_coordinates(n: int) -> np.ndarray:
    return np.arange(n) - n // 2


# ---------------------------------------------------------------------------
# exact non-uniform DFT


def ndft_forward(image: np.ndarray, coords: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Direct evaluation of ``sum_x image(x) exp(-i k . x)`` at every k."""
    image = np.asarray(image)
    ny, nx = image.shape
    xs, ys = pixel_coordinates(nx), pixel_coordinates(ny)
    coords = np.asarray(coords, dtype=np.float64)
    out = np.empty(coords.shape[0], dtype=np.complex128)
    for lo in range(0, coords.shape[0], chunk):
        k = coords[lo:lo + chunk]
        ex = np.exp(-1j * np.outer(k[:, 0], xs))
        ey = np.exp(-1j * np.outer(k[:, 1], ys))
        out[lo:lo + chunk] = np.einsum("ky,kx,yx->k", ey, ex, image, optimize=True)
    return out


def ndft_adjoint(samples: np.ndarray, coords: np.ndarray, shape: tuple[int, int], chunk: int = 4096) -> np.ndarray:
    ny, nx = shape
    xs, ys = pixel_coordinates(nx), pixel_coordinates(ny)
    coords = np.asarray(coords, dtype=np.float64)
    samples = np.asarray(samples)
    out = np.zeros(shape, dtype=np.complex128)
    for lo in range(0, coords.shape[0], chunk):
        k = coords[lo:lo + chunk]
        ex = np.exp(1j * np.outer(k[:, 0], xs))
        ey = np.exp(1j * np.outer(k[:, 1], ys))
        out += (ey * samples[lo:lo + chunk, None]).T @ ex
    return out


# ---------------------------------------------------------------------------
# Kaiser-Bessel gridding


def beatty_beta(width: int, oversampling: float) -> float:
    """Kaiser-Bessel shape parameter minimizing aliasing for a given width and grid ratio."""
    return float(np.pi * np.sqrt((width / oversampling) ** 2 * (oversampling - 0.5) ** 2 - 0.8))


def kaiser_bessel(d: np.ndarray, width: int, beta: float) -> np.ndarray:
    """Kernel value at grid-unit distance ``d``; zero outside ``|d| <= width / 2``."""
    d = np.asarray(d, dtype=np.float64)
    arg = 1.0 - (2.0 * d / width) ** 2
    return np.where(arg >= 0.0, i0(beta * np.sqrt(np.clip(arg, 0.0, None))), 0.0)


def kaiser_bessel_ft(nu: np.ndarray, width: int, beta: float) -> np.ndarray:
    """Continuous Fourier transform of :func:`kaiser_bessel` at frequency ``nu`` (cycles per grid unit)."""
    z = np.sqrt((beta**2 - (np.pi * width * np.asarray(nu, dtype=np.float64)) ** 2).astype(np.complex128))
    small = np.abs(z) < 1e-8
    val = np.where(small, 1.0, np.sinh(z) / np.where(small, 1.0, z))
    return (width * val).real


class NUFFT:
    """Gridded type-2 NUFFT of an ``N x N`` image and its exact adjoint.

    The image is divided by the kernel's deapodization profile, zero padded
    onto an oversampled grid, transformed with an FFT, and interpolated to the
    sample locations with a separable Kaiser-Bessel kernel. The adjoint applies
    the transposes of the same steps in reverse.
    """

    def __init__(self, coords: np.ndarray, image_size: int, oversampling: float = 2.0, width: int = 4,
                 beta: float | None = None):
        self.coords = np.asarray(coords, dtype=np.float64)
        self.n = int(image_size)
        self.grid = int(np.ceil(oversampling * image_size))
        self.width = int(width)
        self.beta = beatty_beta(width, oversampling) if beta is None else float(beta)

    @property
    def n_samples(self) -> int:
        return self.coords.shape[0]

    @cached_property
    def _deapod(self) -> np.ndarray:
        c = kaiser_bessel_ft(pixel_coordinates(self.n) / self.grid, self.width, self.beta)
        return np.outer(c, c)

    @cached_property
    def _pad_index(self) -> np.ndarray:
        return np.mod(pixel_coordinates(self.n), self.grid)

    @cached_property
    def _interp(self) -> sp.csr_matrix:
        K, G, W = self.n_samples, self.grid, self.width
        u = self.coords * (G / (2.0 * np.pi))  # grid units
        start = np.ceil(u - W / 2.0).astype(np.int64)  # (K, 2)
        taps = np.arange(W)
        mx = start[:, 0:1] + taps[None, :]  # (K, W)
        my = start[:, 1:2] + taps[None, :]
        wx = kaiser_bessel(u[:, 0:1] - mx, W, self.beta)
        wy = kaiser_bessel(u[:, 1:2] - my, W, self.beta)
        vals = (wy[:, :, None] * wx[:, None, :]).reshape(K, -1)
        cols = (np.mod(my, G)[:, :, None] * G + np.mod(mx, G)[:, None, :]).reshape(K, -1)
        rows = np.repeat(np.arange(K), W * W)
        return sp.csr_matrix((vals.ravel(), (rows, cols.ravel())), shape=(K, G * G))

    @cached_property
    def _interp_t(self) -> sp.csr_matrix:
        return self._interp.T.tocsr()

    def forward(self, image: np.ndarray) -> np.ndarray:
        image = np.asarray(image)
        if image.shape[-2:] != (self.n, self.n):
            raise ValueError(f"expected trailing image shape {(self.n, self.n)}, got {image.shape}")
        lead = image.shape[:-2]
        flat = image.reshape((-1, self.n, self.n))
        grid = np.zeros((flat.shape[0], self.grid, self.grid), dtype=np.complex128)
        idx = self._pad_index
        grid[:, idx[:, None], idx[None, :]] = flat / self._deapod
        spec = np.fft.fft2(grid).reshape(flat.shape[0], -1)
        out = (self._interp @ spec.T).T
        return out.reshape(lead + (self.n_samples,))

    def adjoint(self, samples: np.ndarray) -> np.ndarray:
        samples = np.asarray(samples)
        if samples.shape[-1] != self.n_samples:
            raise ValueError(f"expected {self.n_samples} samples, got {samples.shape[-1]}")
        lead = samples.shape[:-1]
        flat = samples.reshape((-1, self.n_samples))
        spec = (self._interp_t @ flat.T).T.reshape(-1, self.grid, self.grid)
        grid = np.fft.ifft2(spec) * (self.grid * self.grid)
        idx = self._pad_index
        img = grid[:, idx[:, None], idx[None, :]] / self._deapod
        return img.reshape(lead + (self.n, self.n))


class NDFT:
    """Exact counterpart of :class:`NUFFT` with the same interface."""

    def __init__(self, coords: np.ndarray, image_size: int):
        self.coords = np.asarray(coords, dtype=np.float64)
        self.n = int(image_size)

    @property
    def n_samples(self) -> int:
        return self.coords.shape[0]

    def forward(self, image: np.ndarray) -> np.ndarray:
        image = np.asarray(image)
        lead = image.shape[:-2]
        flat = image.reshape((-1, self.n, self.n))
        out = np.stack([ndft_forward(im, self.coords) for im in flat])
        return out.reshape(lead + (self.n_samples,))

    def adjoint(self, samples: np.ndarray) -> np.ndarray:
        samples = np.asarray(samples)
        lead = samples.shape[:-1]
        flat = samples.reshape((-1, self.n_samples))
        out = np.stack([ndft_adjoint(s, self.coords, (self.n, self.n)) for s in flat])
        return out.reshape(lead + (self.n, self.n))


def make_operator(coords: np.ndarray, image_size: int, method: str = "nufft"):
    if method == "nufft":
        return NUFFT(coords, image_size)
    if method == "ndft":
        return NDFT(coords, image_size)
    raise ValueError(f"unknown transform {method!r}; expected 'nufft' or 'ndft'")


def nufft_forward(image: np.ndarray, traj: Trajectory) -> np.ndarray:
    return NUFFT(traj.coords, image.shape[-1]).forward(image)


def nufft_adjoint(samples: np.ndarray, traj: Trajectory, image_size: int, apply_density: bool = False) -> np.ndarray:
    if apply_density:
        samples = samples * traj.density
    return NUFFT(traj.coords, image_size).adjoint(samples)


class CoilForwardModel:
    """``d -> {F_u (S_c * d)}_c`` for one frame, with its adjoint."""

    def __init__(self, coil_maps: np.ndarray, traj: Trajectory | np.ndarray, method: str = "nufft"):
        self.coil_maps = np.asarray(coil_maps)
        if self.coil_maps.ndim != 3:
            raise ValueError("coil maps must be (coils, N, N)")
        coords = traj.coords if isinstance(traj, Trajectory) else np.asarray(traj)
        self.op = make_operator(coords, self.coil_maps.shape[-1], method)

    @property
    def n_samples(self) -> int:
        return self.op.n_samples

    def forward(self, image: np.ndarray) -> np.ndarray:
        return self.op.forward(self.coil_maps * image)

    def adjoint(self, samples: np.ndarray) -> np.ndarray:
        return (np.conj(self.coil_maps) * self.op.adjoint(samples)).sum(axis=0)


def forward_model(image: np.ndarray, coil_maps: np.ndarray, traj: Trajectory, method: str = "nufft") -> np.ndarray:
    """Per-coil k-space samples ``(coils, n_samples)`` of one frame."""
    return CoilForwardModel(coil_maps, traj, method).forward(image)
