"""Analytic dynamic phantoms, simulated coil maps and retrospective undersampling."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .mri import CoilForwardModel, Trajectory, acceleration_factor, golden_angle, golden_angle_trajectory


@dataclass(frozen=True)
class Sinusoid:
    """Relative modulation ``amplitude * sin(2 pi t / period + phase)`` over frame index ``t``."""

    amplitude: float
    period: float
    phase: float = 0.0

    def __call__(self, t):
        return self.amplitude * np.sin(2.0 * np.pi * np.asarray(t, dtype=np.float64) / self.period + self.phase)

    @property
    def bound(self) -> float:
        return abs(self.amplitude)


@dataclass(frozen=True)
class Uptake:
    """Contrast curve: zero until ``start``, then a linear ramp capped at ``plateau``."""

    start: float
    slope: float
    plateau: float

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        return np.minimum(self.plateau, self.slope * np.maximum(0.0, t - self.start))


@dataclass(frozen=True)
class Ellipse:
    """One phantom component in normalized coordinates (field of view is ``[-1, 1]^2``).

    ``radius_modulation`` scales both semi-axes by ``1 + m(t)``; ``uptake``
    scales the intensity by ``1 + u(t)``.
    """

    center: tuple[float, float]
    axes: tuple[float, float]
    intensity: complex
    angle: float = 0.0
    radius_modulation: Sinusoid | None = None
    uptake: Uptake | None = None
    name: str = ""

    def extent(self) -> float:
        grow = 1.0 + (self.radius_modulation.bound if self.radius_modulation else 0.0)
        return float(np.hypot(*self.center) + max(self.axes) * grow)

    def mask(self, x: np.ndarray, y: np.ndarray, t: float) -> np.ndarray:
        scale = 1.0 + (float(self.radius_modulation(t)) if self.radius_modulation else 0.0)
        a, b = self.axes[0] * scale, self.axes[1] * scale
        c, s = np.cos(self.angle), np.sin(self.angle)
        dx, dy = x - self.center[0], y - self.center[1]
        u = c * dx + s * dy
        v = -s * dx + c * dy
        return (u / a) ** 2 + (v / b) ** 2 <= 1.0

    def value(self, t: float) -> complex:
        gain = 1.0 + (float(self.uptake(t)) if self.uptake else 0.0)
        return complex(self.intensity) * gain


@dataclass(frozen=True)
class DynamicPhantomSpec:
    image_size: int
    n_frames: int
    components: tuple[Ellipse, ...] = field(default_factory=tuple)
    smoothing: float = 0.0  # Gaussian edge blur, in pixels

    def validate(self) -> None:
        if self.image_size < 2 or self.n_frames < 1:
            raise ValueError("image_size must be >= 2 and n_frames >= 1")
        for comp in self.components:
            if min(comp.axes) <= 0:
                raise ValueError(f"component {comp.name or comp}: axes must be positive")
            if comp.radius_modulation and comp.radius_modulation.bound >= 1.0:
                raise ValueError(f"component {comp.name!r}: modulation amplitude must be < 1")
            if comp.extent() > 1.0:
                raise ValueError(f"component {comp.name!r} leaves the field of view")


def image_grid(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Normalized pixel-center coordinates, ``x`` along columns and ``y`` along rows."""
    c = (np.arange(n) - n // 2) / (n / 2.0)
    y, x = np.meshgrid(c, c, indexing="ij")
    return x, y


def generate_phantom(spec: DynamicPhantomSpec) -> np.ndarray:
    """Rasterize ``spec`` into a complex ``(frames, N, N)`` sequence.

    A pixel belongs to a component when its center satisfies the ellipse's
    quadratic form; overlapping components add.
    """
    spec.validate()
    x, y = image_grid(spec.image_size)
    out = np.zeros((spec.n_frames, spec.image_size, spec.image_size), dtype=np.complex128)
    for t in range(spec.n_frames):
        for comp in spec.components:
            out[t][comp.mask(x, y, t)] += comp.value(t)
    if spec.smoothing > 0:
        sigma = (0.0, spec.smoothing, spec.smoothing)
        out = gaussian_filter(out.real, sigma) + 1j * gaussian_filter(out.imag, sigma)
    return out


def component_mask(spec: DynamicPhantomSpec, name: str, frame: int = 0) -> np.ndarray:
    for comp in spec.components:
        if comp.name == name:
            x, y = image_grid(spec.image_size)
            return comp.mask(x, y, frame)
    raise KeyError(f"no component named {name!r}")


def cardiac_phantom(image_size: int = 64, n_frames: int = 16) -> DynamicPhantomSpec:
    """Beating-ellipse torso: a pulsing ventricle plus a contrast-filling vessel."""
    beat = Sinusoid(amplitude=0.18, period=float(n_frames))
    wall = Sinusoid(amplitude=0.10, period=float(n_frames))
    phase = np.exp(0.25j)
    comps = (
        Ellipse((0.0, 0.0), (0.82, 0.66), 0.35 * phase, name="body"),
        Ellipse((0.12, 0.05), (0.36, 0.30), 0.30 * phase, angle=0.4, radius_modulation=wall, name="myocardium"),
        Ellipse((0.12, 0.05), (0.22, 0.18), 0.45 * phase, angle=0.4, radius_modulation=beat, name="ventricle"),
        Ellipse((-0.38, -0.12), (0.09, 0.09), 0.15 * phase, uptake=Uptake(start=n_frames / 6, slope=0.6, plateau=2.5),
                name="aorta"),
        Ellipse((-0.30, 0.40), (0.20, 0.10), 0.25 * phase, angle=-0.3, name="lung_gap"),
        Ellipse((0.0, -0.52), (0.10, 0.08), 0.50, name="spine"),
    )
    return DynamicPhantomSpec(image_size, n_frames, comps, smoothing=0.5)


def uptake_phantom(image_size: int = 64, n_frames: int = 16) -> DynamicPhantomSpec:
    """Contrast-enhancement analog: static anatomy whose vessels and organ brighten over time."""
    comps = (
        Ellipse((0.0, 0.0), (0.85, 0.68), 0.25, name="body"),
        Ellipse((0.25, 0.05), (0.45, 0.38), 0.20, angle=0.2, uptake=Uptake(n_frames / 3, 0.15, 1.0), name="liver"),
        Ellipse((-0.30, -0.25), (0.08, 0.08), 0.15, uptake=Uptake(n_frames / 8, 0.8, 3.0), name="aorta"),
        Ellipse((0.15, -0.05), (0.06, 0.06), 0.15, uptake=Uptake(n_frames / 4, 0.5, 2.0), name="portal_vein"),
        Ellipse((-0.02, -0.55), (0.10, 0.08), 0.50, name="spine"),
    )
    return DynamicPhantomSpec(image_size, n_frames, comps, smoothing=0.5)


PHANTOMS = {"cardiac": cardiac_phantom, "uptake": uptake_phantom}
ROI_NAMES = {"cardiac": ("aorta", "ventricle"), "uptake": ("aorta", "portal_vein")}


def generate_coil_maps(image_size: int, n_coils: int, seed: int = 0, width: float = 0.9) -> np.ndarray:
    """Smooth complex receive profiles normalized to unit sum-of-squares.

    Each coil is a Gaussian lobe centered on the field-of-view boundary with a
    seeded linear phase ramp.
    """
    if n_coils < 1:
        raise ValueError("n_coils must be >= 1")
    if n_coils == 1:
        return np.ones((1, image_size, image_size), dtype=np.complex128)
    rng = np.random.default_rng(seed)
    x, y = image_grid(image_size)
    maps = np.empty((n_coils, image_size, image_size), dtype=np.complex128)
    for c in range(n_coils):
        theta = 2.0 * np.pi * c / n_coils
        cx, cy = 1.1 * np.cos(theta), 1.1 * np.sin(theta)
        mag = np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2.0 * width**2))
        p0, px, py = rng.uniform(-np.pi, np.pi), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)
        maps[c] = mag * np.exp(1j * (p0 + px * x + py * y))
    return maps / np.sqrt((np.abs(maps) ** 2).sum(axis=0))


@dataclass
class Acquisition:
    """Undersampled multi-coil radial k-space of a dynamic sequence."""

    kspace: np.ndarray  # (frames, coils, samples) complex
    coords: np.ndarray  # (frames, samples, 2)
    density: np.ndarray  # (frames, samples)
    coil_maps: np.ndarray  # (coils, N, N) complex
    spokes_per_frame: int
    samples_per_spoke: int
    start_index: int = 0

    def __post_init__(self):
        if self.kspace.ndim != 3:
            raise ValueError("kspace must be (frames, coils, samples)")
        T, C, K = self.kspace.shape
        if self.coords.shape != (T, K, 2) or self.density.shape != (T, K):
            raise ValueError("trajectory arrays do not match the k-space shape")
        if self.coil_maps.shape[0] != C:
            raise ValueError("coil map count does not match k-space coils")
        if K != self.spokes_per_frame * self.samples_per_spoke:
            raise ValueError("sample count must equal spokes_per_frame * samples_per_spoke")
        self._ops: dict = {}

    @property
    def n_frames(self) -> int:
        return self.kspace.shape[0]

    @property
    def n_coils(self) -> int:
        return self.kspace.shape[1]

    @property
    def image_size(self) -> int:
        return self.coil_maps.shape[-1]

    @property
    def acceleration_factor(self) -> float:
        return acceleration_factor(self.image_size, self.spokes_per_frame)

    def trajectory(self, frame: int) -> Trajectory:
        first = self.start_index + frame * self.spokes_per_frame
        return Trajectory(angles=golden_angle(first + np.arange(self.spokes_per_frame)),
                          coords=self.coords[frame], density=self.density[frame],
                          samples_per_spoke=self.samples_per_spoke)

    def operator(self, frame: int, method: str = "nufft") -> CoilForwardModel:
        key = (frame, method)
        if key not in self._ops:
            self._ops[key] = CoilForwardModel(self.coil_maps, self.coords[frame], method)
        return self._ops[key]

    def subset(self, frames) -> "Acquisition":
        frames = np.asarray(frames)
        acq = Acquisition(self.kspace[frames], self.coords[frames], self.density[frames], self.coil_maps,
                          self.spokes_per_frame, self.samples_per_spoke, self.start_index)
        return acq

    def scaled(self, factor: float) -> "Acquisition":
        return Acquisition(self.kspace * factor, self.coords, self.density, self.coil_maps,
                           self.spokes_per_frame, self.samples_per_spoke, self.start_index)


def retrospective_undersample(ground_truth: np.ndarray, coil_maps: np.ndarray, spokes_per_frame: int,
                              samples_per_spoke: int | None = None, start_index: int = 0,
                              method: str = "ndft") -> Acquisition:
    """Simulate golden-angle radial multi-coil samples of every frame of ``ground_truth``.

    The exact NDFT is the default so that reconstructions using the gridded
    operator are not fitted to their own approximation error.
    """
    gt = np.asarray(ground_truth)
    if gt.ndim != 3 or gt.shape[1] != gt.shape[2]:
        raise ValueError("ground truth must be (frames, N, N)")
    if coil_maps.shape[-2:] != gt.shape[-2:]:
        raise ValueError("coil maps and ground truth disagree on image size")
    n = gt.shape[-1]
    spp = samples_per_spoke or n
    ks, coords, dens = [], [], []
    for t in range(gt.shape[0]):
        traj = golden_angle_trajectory(t, spokes_per_frame, n, spp, start_index)
        ks.append(CoilForwardModel(coil_maps, traj, method).forward(gt[t]))
        coords.append(traj.coords)
        dens.append(traj.density)
    return Acquisition(np.stack(ks), np.stack(coords), np.stack(dens), np.asarray(coil_maps),
                       spokes_per_frame, spp, start_index)


def cartesian_kspace(images: np.ndarray) -> np.ndarray:
    """Fully sampled Cartesian k-space with the DC sample at index ``N // 2``."""
    return np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(images, axes=(-2, -1))), axes=(-2, -1))


def cartesian_images(kspace: np.ndarray) -> np.ndarray:
    return np.fft.fftshift(np.fft.ifft2(np.fft.ifftshift(kspace, axes=(-2, -1))), axes=(-2, -1))
