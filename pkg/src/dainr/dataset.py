"""On-disk dataset, reconstruction and preview formats.

A dataset is a directory holding ``manifest.json`` plus raw arrays. Every
array is row-major little-endian float32; complex arrays interleave
``(re, im)`` pairs. The manifest lists each array under ``arrays`` with its
file name, shape and whether it is complex.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mri import GOLDEN_ANGLE_DEG, golden_angle_trajectory
from .phantom import Acquisition, cartesian_images

log = logging.getLogger(__name__)

DATASET_FORMAT = "dainr-dataset"
RECON_FORMAT = "dainr-reconstruction"
FORMAT_VERSION = 1
F32 = np.dtype("<f4")


def write_raw(path, array: np.ndarray) -> dict:
    """Write ``array`` as little-endian float32 and return its manifest entry."""
    array = np.asarray(array)
    is_complex = np.iscomplexobj(array)
    if is_complex:
        flat = np.stack([array.real, array.imag], axis=-1)
    else:
        flat = array
    Path(path).write_bytes(np.ascontiguousarray(flat, dtype=F32).tobytes())
    return {"file": Path(path).name, "shape": list(array.shape), "complex": bool(is_complex)}


def read_raw(path, shape, is_complex: bool) -> np.ndarray:
    raw = np.frombuffer(Path(path).read_bytes(), dtype=F32)
    shape = tuple(int(s) for s in shape)
    if is_complex:
        expected = int(np.prod(shape)) * 2
        if raw.size != expected:
            raise ValueError(f"{path}: expected {expected} floats, found {raw.size}")
        pairs = raw.reshape(shape + (2,))
        return (pairs[..., 0].astype(np.float64) + 1j * pairs[..., 1]).astype(np.complex128)
    if raw.size != int(np.prod(shape)):
        raise ValueError(f"{path}: expected {int(np.prod(shape))} floats, found {raw.size}")
    return raw.reshape(shape).astype(np.float64)


def to_storage(array: np.ndarray) -> np.ndarray:
    """Round ``array`` through the float32 storage precision."""
    if np.iscomplexobj(array):
        return np.asarray(array, dtype=np.complex64).astype(np.complex128)
    return np.asarray(array, dtype=np.float32).astype(np.float64)


def ensure_output_dir(path, force: bool = False) -> Path:
    path = Path(path)
    if path.exists():
        if not path.is_dir():
            raise FileExistsError(f"{path} exists and is not a directory")
        if any(path.iterdir()) and not force:
            raise FileExistsError(f"{path} is not empty; pass --force to overwrite")
    path.mkdir(parents=True, exist_ok=True)
    return path


@dataclass
class DatasetBundle:
    coil_maps: np.ndarray
    acquisition: Acquisition | None = None
    ground_truth: np.ndarray | None = None
    rois: dict[str, np.ndarray] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    trajectory: str = "radial"
    cartesian_kspace: np.ndarray | None = None

    @property
    def image_size(self) -> int:
        return self.coil_maps.shape[-1]


def save_dataset(bundle: DatasetBundle, path, force: bool = False) -> Path:
    path = ensure_output_dir(path, force)
    arrays = {"coil_maps": write_raw(path / "coil_maps.f32", bundle.coil_maps)}
    manifest = {
        "format": DATASET_FORMAT,
        "version": FORMAT_VERSION,
        "trajectory": bundle.trajectory,
        "image_size": bundle.image_size,
        "n_coils": int(bundle.coil_maps.shape[0]),
    }
    if bundle.ground_truth is not None:
        arrays["ground_truth"] = write_raw(path / "ground_truth.f32", bundle.ground_truth)
        manifest["n_frames"] = int(bundle.ground_truth.shape[0])
    if bundle.trajectory == "cartesian":
        if bundle.cartesian_kspace is None:
            raise ValueError("a cartesian dataset needs its k-space")
        arrays["kspace"] = write_raw(path / "kspace.f32", bundle.cartesian_kspace)
        manifest["n_frames"] = int(bundle.cartesian_kspace.shape[0])
    else:
        acq = bundle.acquisition
        if acq is None:
            raise ValueError("a radial dataset needs an acquisition")
        arrays["kspace"] = write_raw(path / "kspace.f32", acq.kspace)
        arrays["trajectory"] = write_raw(path / "trajectory.f32", acq.coords)
        arrays["density"] = write_raw(path / "density.f32", acq.density)
        manifest.update({
            "n_frames": acq.n_frames,
            "spokes_per_frame": acq.spokes_per_frame,
            "samples_per_spoke": acq.samples_per_spoke,
            "acceleration_factor": round(acq.acceleration_factor, 1),
            "golden_angle_deg": GOLDEN_ANGLE_DEG,
            "golden_angle_start_index": acq.start_index,
        })
    if bundle.rois:
        (path / "rois").mkdir(exist_ok=True)
        for name, mask in sorted(bundle.rois.items()):
            write_raw(path / "rois" / f"{name}.f32", np.asarray(mask, dtype=np.float32))
        manifest["rois"] = sorted(bundle.rois)
    manifest["arrays"] = arrays
    manifest.update(bundle.meta)
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def read_mask(path, image_size: int | None = None) -> np.ndarray:
    """Load an ROI mask stored as a raw float32 ``N x N`` array (nonzero = inside)."""
    raw = np.frombuffer(Path(path).read_bytes(), dtype=F32)
    n = int(round(np.sqrt(raw.size))) if image_size is None else image_size
    if n * n != raw.size:
        raise ValueError(f"{path}: {raw.size} floats is not a square mask of size {n}")
    return raw.reshape(n, n) != 0


def load_dataset(path) -> DatasetBundle:
    path = Path(path)
    manifest_path = path / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no dataset manifest in {path}")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format") != DATASET_FORMAT:
        raise ValueError(f"{path} is not a dataset directory")
    arrays = manifest["arrays"]

    def _read(name):
        entry = arrays[name]
        return read_raw(path / entry["file"], entry["shape"], entry["complex"])

    maps = _read("coil_maps")
    gt = _read("ground_truth") if "ground_truth" in arrays else None
    rois = {name: read_mask(path / "rois" / f"{name}.f32", manifest["image_size"]) for name in manifest.get("rois", [])}
    known = {"format", "version", "trajectory", "image_size", "n_coils", "n_frames", "spokes_per_frame",
             "samples_per_spoke", "acceleration_factor", "golden_angle_deg", "golden_angle_start_index", "rois",
             "arrays"}
    meta = {k: v for k, v in manifest.items() if k not in known}

    if manifest["trajectory"] == "cartesian":
        kspace = _read("kspace")
        if gt is None:
            gt = (np.conj(maps)[None] * cartesian_images(kspace)).sum(axis=1)
        return DatasetBundle(maps, None, gt, rois, meta, "cartesian", kspace)

    kspace = _read("kspace")
    coords = _read("trajectory")
    density = _read("density")
    n, spokes = manifest["image_size"], manifest["spokes_per_frame"]
    spp, start = manifest["samples_per_spoke"], manifest["golden_angle_start_index"]
    # golden-angle positions are rebuilt exactly; the stored copy must agree to float32 precision
    rebuilt = [golden_angle_trajectory(t, spokes, n, spp, start) for t in range(kspace.shape[0])]
    exact_coords = np.stack([tr.coords for tr in rebuilt])
    if np.max(np.abs(exact_coords - coords)) > 1e-5:
        log.warning("stored trajectory deviates from the golden-angle schedule; using stored coordinates")
    else:
        coords = exact_coords
        density = np.stack([tr.density for tr in rebuilt])
    acq = Acquisition(kspace, coords, density, maps, spokes, spp, start)
    return DatasetBundle(maps, acq, gt, rois, meta, "radial")


def write_pgm(path, image: np.ndarray, vmax: float | None = None) -> None:
    """8-bit binary PGM of ``|image|`` scaled so ``vmax`` maps to 255."""
    mag = np.abs(np.asarray(image, dtype=np.complex128))
    top = float(mag.max()) if vmax is None else float(vmax)
    scaled = np.zeros_like(mag) if top <= 0 else np.clip(mag / top, 0.0, 1.0)
    pix = np.rint(scaled * 255.0).astype(np.uint8)
    h, w = pix.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + pix.tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError(f"{path} is not a binary PGM")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise ValueError("only 8-bit PGM is supported")
    return np.frombuffer(parts[4][: w * h], dtype=np.uint8).reshape(h, w)


def write_previews(directory, frames: np.ndarray, prefix: str = "frame", png: bool = False) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    vmax = float(np.abs(frames).max()) if frames.size else 1.0
    for t, frame in enumerate(frames):
        write_pgm(directory / f"{prefix}_{t:03d}.pgm", frame, vmax)
        if png:
            try:
                from PIL import Image
            except ImportError:
                log.warning("Pillow not installed; skipping PNG previews")
                png = False
                continue
            Image.fromarray(read_pgm(directory / f"{prefix}_{t:03d}.pgm")).save(directory / f"{prefix}_{t:03d}.png")


def save_reconstruction(path, frames: np.ndarray, meta: dict) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    entry = write_raw(path / "frames.f32", frames)
    manifest = {"format": RECON_FORMAT, "version": FORMAT_VERSION, "frames": entry, **meta}
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_reconstruction(path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    manifest = json.loads((path / "manifest.json").read_text())
    if manifest.get("format") != RECON_FORMAT:
        raise ValueError(f"{path} is not a reconstruction directory")
    entry = manifest["frames"]
    return read_raw(path / entry["file"], entry["shape"], entry["complex"]), manifest


def simulate_bundle(phantom: str = "cardiac", image_size: int = 64, n_frames: int = 16, n_coils: int = 4,
                    spokes_per_frame: int = 7, seed: int = 0, start_index: int = 0,
                    transform: str = "ndft") -> DatasetBundle:
    """Phantom ground truth, coil maps and its retrospectively undersampled acquisition.

    Ground truth and maps are rounded to storage precision before simulating,
    so re-simulating from the saved files reproduces the saved samples.
    """
    from .phantom import PHANTOMS, ROI_NAMES, component_mask, generate_coil_maps, generate_phantom, \
        retrospective_undersample

    if phantom not in PHANTOMS:
        raise ValueError(f"unknown phantom {phantom!r}; choose from {sorted(PHANTOMS)}")
    spec = PHANTOMS[phantom](image_size, n_frames)
    gt = to_storage(generate_phantom(spec))
    maps = to_storage(generate_coil_maps(image_size, n_coils, seed))
    acq = retrospective_undersample(gt, maps, spokes_per_frame, start_index=start_index, method=transform)
    rois = {name: component_mask(spec, name, 0) for name in ROI_NAMES[phantom]}
    meta = {"seed": seed, "phantom": phantom, "simulation_transform": transform}
    return DatasetBundle(maps, acq, gt, rois, meta, "radial")
