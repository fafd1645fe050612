"""Deformation and canonical networks and the frame renderer."""
from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np
from scipy.ndimage import correlate

from . import autodiff as ad
from .autodiff import Tensor
from .encodings import HashGrid, HashGridConfig, frequency_encode

CHECKPOINT_FORMAT = "dainr-checkpoint"
CHECKPOINT_VERSION = 1


class MLP:
    """ReLU perceptron with a linear output layer."""

    def __init__(self, in_dim: int, out_dim: int, hidden_width: int = 64, hidden_layers: int = 5,
                 rng: np.random.Generator | None = None, dtype=np.float32, out_scale: float = 1.0, name: str = "mlp"):
        rng = np.random.default_rng(0) if rng is None else rng
        widths = [in_dim] + [hidden_width] * hidden_layers + [out_dim]
        self.weights: list[Tensor] = []
        self.biases: list[Tensor] = []
        for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
            last = i == len(widths) - 2
            bound = np.sqrt((3.0 if last else 6.0) / fan_in)
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            if last:
                w *= out_scale
            self.weights.append(Tensor(w.astype(dtype), requires_grad=True, name=f"{name}.{i}.weight"))
            self.biases.append(Tensor(np.zeros(fan_out, dtype=dtype), requires_grad=True, name=f"{name}.{i}.bias"))

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    def __call__(self, x) -> Tensor:
        h = ad.as_tensor(x)
        if h.shape[-1] != self.in_dim:
            raise ValueError(f"MLP expects {self.in_dim} input features, got {h.shape[-1]}")
        n = len(self.weights)
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = ad.linear(h, w, b)
            if i < n - 1:
                h = ad.relu(h)
        return h

    def parameters(self) -> list[Tensor]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out


class FeatureExtractor:
    """Frozen, seeded convolutional stack mapping image-domain frames to feature maps.

    The input is one complex frame (two channels, real and imaginary) or two
    neighboring frames concatenated channel-wise (four channels). Borders are
    handled by edge replication so the output keeps the input's spatial size.
    """

    def __init__(self, channels: int = 16, depth: int = 3, in_frames: int = 1, seed: int = 0,
                 kernels: list[np.ndarray] | None = None):
        self.channels = channels
        self.in_frames = in_frames
        if kernels is None:
            rng = np.random.default_rng(seed)
            kernels = []
            c_in = 2 * in_frames
            for i in range(depth):
                c_out = channels
                k = rng.standard_normal((c_out, c_in, 3, 3)) * np.sqrt(2.0 / (c_in * 9))
                kernels.append(k)
                c_in = c_out
        self.kernels = [np.asarray(k, dtype=np.float64) for k in kernels]
        self.channels = self.kernels[-1].shape[0]
        self.parameters_frozen = [Tensor(k, requires_grad=False, name=f"extractor.{i}") for i, k in enumerate(self.kernels)]

    @property
    def in_channels(self) -> int:
        return self.kernels[0].shape[1]

    def __call__(self, frames) -> np.ndarray:
        frames = [np.asarray(f) for f in (frames if isinstance(frames, (list, tuple)) else [frames])]
        x = np.concatenate([np.stack([f.real, f.imag]) for f in frames], axis=0).astype(np.float64)
        if x.shape[0] != self.in_channels:
            raise ValueError(f"extractor expects {self.in_channels} input channels, got {x.shape[0]}")
        scale = np.abs(x).max()
        if scale > 0:
            x = x / scale
        for i, k in enumerate(self.kernels):
            out = np.zeros((k.shape[0],) + x.shape[1:])
            for o in range(k.shape[0]):
                for c in range(k.shape[1]):
                    out[o] += correlate(x[c], k[o, c], mode="nearest")
            x = np.maximum(out, 0.0) if i < len(self.kernels) - 1 else out
        return x


def lattice(n: int) -> np.ndarray:
    """Evenly spaced normalized positions of ``n`` pixels across the field of view."""
    return (np.arange(n) - n // 2) / (n / 2.0)


def lattice_coords(height: int, width: int) -> np.ndarray:
    """``(height * width, 2)`` array of ``(x, y)`` pixel positions in row-major order."""
    y, x = np.meshgrid(lattice(height), lattice(width), indexing="ij")
    return np.stack([x.ravel(), y.ravel()], axis=-1)


def scaled_size(n: int, scale: float) -> int:
    return int(round(n * scale))


def upsample_bilinear(fmap: np.ndarray, height: int, width: int) -> np.ndarray:
    """Resample a ``(C, H, W)`` map onto the lattice of a ``height x width`` image of the same field of view."""
    C, H, W = fmap.shape

    def _axis(n_in, n_out):
        pos = lattice(n_out) * (n_in / 2.0) + n_in // 2
        pos = np.clip(pos, 0.0, n_in - 1.0)
        lo = np.minimum(np.floor(pos).astype(int), n_in - 2) if n_in > 1 else np.zeros(n_out, int)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, pos - lo

    y0, y1, fy = _axis(H, height)
    x0, x1, fx = _axis(W, width)
    top = fmap[:, y0][:, :, x0] * (1 - fx) + fmap[:, y0][:, :, x1] * fx
    bot = fmap[:, y1][:, :, x0] * (1 - fx) + fmap[:, y1][:, :, x1] * fx
    return top * (1 - fy)[:, None] + bot * fy[:, None]


def upsample_nearest_index(n_in: int, n_out: int) -> np.ndarray:
    pos = np.rint(lattice(n_out) * (n_in / 2.0) + n_in // 2).astype(int)
    return np.clip(pos, 0, n_in - 1)


class DAINRModel:
    """Deformation network over frequency-encoded ``(x, y, t)`` plus a hash-encoded canonical network.

    ``canonical_time`` is the time value whose deformation is pinned to zero.
    """

    def __init__(self, grid: HashGridConfig | None = None, hidden_width: int = 64, hidden_layers: int = 5,
                 spatial_bands: int = 10, temporal_bands: int = 6, feature_channels: int = 0,
                 canonical_time: float = 0.0, deform_init_scale: float = 1e-4, seed: int = 0,
                 dtype=np.float32):
        self.grid_config = grid if grid is not None else HashGridConfig()
        if self.grid_config.dims != 2:
            raise ValueError("the canonical grid is 2-D")
        self.hidden_width = hidden_width
        self.hidden_layers = hidden_layers
        self.spatial_bands = spatial_bands
        self.temporal_bands = temporal_bands
        self.feature_channels = feature_channels
        self.canonical_time = float(canonical_time)
        self.deform_init_scale = deform_init_scale
        self.seed = seed
        self.dtype = np.dtype(dtype)

        rng = np.random.default_rng(seed)
        deform_in = 2 * 2 * spatial_bands + 2 * temporal_bands
        self.deformation_net = MLP(deform_in, 2, hidden_width, hidden_layers, rng, self.dtype,
                                   out_scale=deform_init_scale, name="deformation")
        self.hash_grid = HashGrid(self.grid_config, rng, self.dtype)
        self.canonical_net = MLP(self.grid_config.output_dim + feature_channels, 2, hidden_width, hidden_layers,
                                 rng, self.dtype, name="canonical")

    # -- parameters -------------------------------------------------------
    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = [(p.name, p) for p in self.deformation_net.parameters()]
        out.append(("hash_tables", self.hash_grid.tables))
        out += [(p.name, p) for p in self.canonical_net.parameters()]
        return out

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def get_config(self) -> dict:
        return {
            "grid": asdict(self.grid_config),
            "hidden_width": self.hidden_width,
            "hidden_layers": self.hidden_layers,
            "spatial_bands": self.spatial_bands,
            "temporal_bands": self.temporal_bands,
            "feature_channels": self.feature_channels,
            "canonical_time": self.canonical_time,
            "deform_init_scale": self.deform_init_scale,
            "seed": self.seed,
            "dtype": self.dtype.str,
        }

    @classmethod
    def from_config(cls, config: dict) -> "DAINRModel":
        cfg = dict(config)
        cfg["grid"] = HashGridConfig(**cfg["grid"])
        cfg["dtype"] = np.dtype(cfg["dtype"])
        return cls(**cfg)

    # -- forward pieces ---------------------------------------------------
    def deform(self, coords, t: float) -> Tensor:
        """Displacement ``(P, 2)`` carrying frame-``t`` positions into canonical space."""
        xy = np.asarray(coords.data if isinstance(coords, Tensor) else coords, dtype=self.dtype)
        if float(t) == self.canonical_time:
            return Tensor(np.zeros((xy.shape[0], 2), dtype=self.dtype))
        tt = np.full((xy.shape[0], 1), t, dtype=self.dtype)
        enc = np.concatenate([frequency_encode(xy, self.spatial_bands).data,
                              frequency_encode(tt, self.temporal_bands).data], axis=1)
        return self.deformation_net(Tensor(enc))

    def canonical_query(self, xprime, features: np.ndarray | None = None) -> Tensor:
        """``(P, 2)`` real and imaginary parts at canonical positions ``xprime``."""
        enc = self.hash_grid.encode(xprime)
        if self.feature_channels:
            if features is None:
                raise ValueError("model was built with image features; none given")
            features = np.asarray(features, dtype=self.dtype)
            if features.shape != (enc.shape[0], self.feature_channels):
                raise ValueError(f"features must be ({enc.shape[0]}, {self.feature_channels}), got {features.shape}")
            enc = ad.concat([enc, Tensor(features)], axis=1)
        elif features is not None:
            raise ValueError("model was built without image features")
        return self.canonical_net(enc)

    def render(self, t: float, height: int, width: int | None = None, scale: float = 1.0,
               features: np.ndarray | None = None, resample: str = "lattice") -> Tensor:
        """Rendered frame as a ``(rH * rW, 2)`` tensor in row-major pixel order.

        ``features`` is the extractor output at base resolution ``(C, H, W)``;
        it is bilinearly upscaled by ``scale``. With ``resample="nearest"`` the
        deformed positions are computed on the base lattice and replicated to
        the fine one by nearest-neighbor lookup; ``"lattice"`` evaluates the
        deformation on the fine lattice directly.
        """
        width = height if width is None else width
        if scale < 1.0:
            raise ValueError(f"scale ratio must be >= 1, got {scale}")
        if resample not in ("lattice", "nearest"):
            raise ValueError(f"unknown resample mode {resample!r}")
        rh, rw = scaled_size(height, scale), scaled_size(width, scale)
        if resample == "nearest" and (rh, rw) != (height, width):
            base = lattice_coords(height, width).astype(self.dtype)
            warped = ad.add(Tensor(base), self.deform(base, t))
            iy = upsample_nearest_index(height, rh)
            ix = upsample_nearest_index(width, rw)
            idx = (iy[:, None] * width + ix[None, :]).ravel()
            xprime = ad.getitem(warped, idx)
        else:
            fine = lattice_coords(rh, rw).astype(self.dtype)
            xprime = ad.add(Tensor(fine), self.deform(fine, t))
        feats = None
        if self.feature_channels:
            if features is None:
                raise ValueError("model was built with image features; none given")
            up = upsample_bilinear(np.asarray(features), rh, rw)
            feats = up.reshape(up.shape[0], -1).T
        return self.canonical_query(xprime, feats)

    def render_frame(self, t: float, height: int, width: int | None = None, scale: float = 1.0,
                     features: np.ndarray | None = None, resample: str = "lattice") -> np.ndarray:
        """Complex ``(rH, rW)`` image at time ``t``."""
        width = height if width is None else width
        out = self.render(t, height, width, scale, features, resample).data
        rh, rw = scaled_size(height, scale), scaled_size(width, scale)
        return (out[:, 0] + 1j * out[:, 1]).reshape(rh, rw)


def save_checkpoint(model: DAINRModel, path, extra: dict | None = None) -> None:
    """Write ``manifest.json`` and a little-endian ``params.bin`` blob into directory ``path``.

    Tensors are stored back to back in manifest order: deformation layers,
    hash tables, canonical layers.
    """
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    dt = np.dtype(model.dtype).newbyteorder("<")
    entries, offset = [], 0
    with open(path / "params.bin", "wb") as fh:
        for name, p in model.named_parameters():
            blob = np.ascontiguousarray(p.data, dtype=dt).tobytes()
            entries.append({"name": name, "shape": list(p.shape), "offset": offset, "nbytes": len(blob)})
            fh.write(blob)
            offset += len(blob)
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "dtype": dt.str,
        "model": model.get_config(),
        "tensors": entries,
        "extra": extra or {},
    }
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_checkpoint(path) -> tuple[DAINRModel, dict]:
    path = Path(path)
    manifest = json.loads((path / "manifest.json").read_text())
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a model checkpoint")
    model = DAINRModel.from_config(manifest["model"])
    dt = np.dtype(manifest["dtype"])
    raw = (path / "params.bin").read_bytes()
    params = dict(model.named_parameters())
    for entry in manifest["tensors"]:
        arr = np.frombuffer(raw, dtype=dt, count=entry["nbytes"] // dt.itemsize, offset=entry["offset"])
        p = params[entry["name"]]
        p.data = arr.reshape(entry["shape"]).astype(model.dtype)
    return model, manifest.get("extra", {})
