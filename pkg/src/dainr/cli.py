"""Command-line interface: ``dainr simulate | reconstruct | evaluate | interpolate``.

Runs are driven by a flat ``key = value`` config file with dotted sections.
Command-line flags override config values. Every command writes the fully
resolved config to ``config.toml`` inside its output directory.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .dataset import (ensure_output_dir, load_dataset, load_reconstruction, read_mask, save_dataset,
                      save_reconstruction, simulate_bundle, write_previews, write_raw)
from .estimators import DAINRReconstructor, HashINRReconstructor, ZeroFilledReconstructor
from .metrics import error_maps, evaluate_sequence
from .training import SPATIAL_FACTORS, TEMPORAL_FACTORS, write_loss_trace

log = logging.getLogger("dainr")

# key -> (default, description). Empty strings and zeros mean "unset" where noted.
DEFAULTS: dict[str, tuple[object, str]] = {
    "method": ("dainr", "dainr / hashinr / zerofill"),
    "seed": (0, "seed for coil maps, initialization and frame order"),
    "out": ("", "output directory"),
    "dataset": ("", "dataset directory read by reconstruct/interpolate/evaluate"),
    "force": (False, "allow writing into a non-empty output directory"),
    "phantom.name": ("cardiac", "cardiac / uptake"),
    "phantom.image_size": (64, "image side N in pixels"),
    "phantom.frames": (16, "number of frames"),
    "phantom.coils": (4, "number of receive coils"),
    "acquisition.spokes": (7, "radial spokes per frame"),
    "acquisition.start_index": (0, "golden-angle index of the first spoke"),
    "acquisition.transform": ("ndft", "transform used to simulate k-space: ndft / nufft"),
    "hash.levels": (16, "hash-grid levels L"),
    "hash.table_size_log2": (14, "log2 of entries per level T"),
    "hash.features": (2, "features per entry F"),
    "hash.coarsest_resolution": (16, "coarsest grid resolution"),
    "hash.growth": (0.0, "per-level growth factor; 0 derives it from hash.finest_resolution"),
    "hash.finest_resolution": (0, "finest grid resolution; 0 means the image size, at least twice the coarsest"),
    "model.hidden_width": (64, "MLP hidden width"),
    "model.hidden_layers": (5, "MLP hidden layers"),
    "model.spatial_bands": (10, "frequency bands per spatial coordinate"),
    "model.temporal_bands": (6, "frequency bands for time"),
    "model.features": (False, "enable the frozen convolutional feature pathway"),
    "model.feature_channels": (16, "feature channels when enabled"),
    "model.canonical_frame": (0, "frame index anchored to the canonical space"),
    "model.resample": ("lattice", "super-resolution rendering: lattice / nearest"),
    "train.iters": (2000, "optimizer iterations"),
    "train.lr": (1e-3, "AdamW learning rate"),
    "train.weight_decay": (0.0, "AdamW decoupled weight decay"),
    "train.schedule": ("cyclic", "frame order: cyclic / random"),
    "train.dtype": ("float32", "parameter precision: float32 / float64"),
    "train.transform": ("nufft", "transform used in the loss: nufft / ndft"),
    "train.early_stop_window": (200, "plateau window in iterations; 0 disables"),
    "train.early_stop_tol": (1e-5, "relative loss change that counts as a plateau"),
    "hashinr.lambda_tv": (0.0, "temporal TV weight"),
    "hashinr.lambda_lowrank": (0.0, "nuclear-norm weight"),
    "interp.mode": ("none", "none / spatial / temporal"),
    "interp.factor": (2.0, "spatial subsampling factor or temporal keep-every-k"),
    "output.png": (False, "also write PNG previews when Pillow is available"),
}

METHODS = ("dainr", "hashinr", "zerofill")


class ConfigError(ValueError):
    pass


def _parse_value(text: str):
    text = text.strip()
    if text.startswith("'") and text.endswith("'") and len(text) >= 2:
        return text[1:-1]
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        raise ConfigError(f"cannot parse value {text!r}; quote strings") from None


def parse_config(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment, ``[section]`` prefixes later keys."""
    out, section = {}, ""
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        value = value.split(" #", 1)[0] if not value.strip().startswith(('"', "'")) else value
        key = f"{section}.{key.strip()}" if section else key.strip()
        out[key] = _parse_value(value)
    return out


def _coerce(key: str, value):
    default = DEFAULTS[key][0]
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key} must be true or false")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not float(value).is_integer():
            raise ConfigError(f"{key} must be an integer")
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{key} must be a string")
    return value


def resolve_config(file_values: dict, overrides: dict) -> dict:
    cfg = {k: v for k, (v, _) in DEFAULTS.items()}
    for source in (file_values, overrides):
        for key, value in source.items():
            if key not in DEFAULTS:
                raise ConfigError(f"unknown config key {key!r}")
            cfg[key] = _coerce(key, value)
    if cfg["method"] not in METHODS:
        raise ConfigError(f"method must be one of {METHODS}, got {cfg['method']!r}")
    if cfg["interp.mode"] not in ("none", "spatial", "temporal"):
        raise ConfigError(f"interp.mode must be none, spatial or temporal, got {cfg['interp.mode']!r}")
    return cfg


def dump_config(cfg: dict) -> str:
    lines = []
    for key in DEFAULTS:
        lines.append(f"# {DEFAULTS[key][1]}")
        lines.append(f"{key} = {json.dumps(cfg[key])}")
    return "\n".join(lines) + "\n"


def _write_config(out: Path, cfg: dict) -> None:
    (out / "config.toml").write_text(dump_config(cfg))


def _require(cfg: dict, key: str) -> str:
    if not cfg[key]:
        raise ConfigError(f"{key} is required (set it in the config or on the command line)")
    return cfg[key]


# ---------------------------------------------------------------------------
# commands

def cmd_simulate(cfg: dict) -> Path:
    out = ensure_output_dir(_require(cfg, "out"), cfg["force"])
    bundle = simulate_bundle(cfg["phantom.name"], cfg["phantom.image_size"], cfg["phantom.frames"],
                             cfg["phantom.coils"], cfg["acquisition.spokes"], cfg["seed"],
                             cfg["acquisition.start_index"], cfg["acquisition.transform"])
    save_dataset(bundle, out, force=True)
    _write_config(out, cfg)
    log.info("wrote dataset to %s (AF %.1f)", out, bundle.acquisition.acceleration_factor)
    return out


def _estimator(cfg: dict):
    method = cfg["method"]
    grid = dict(n_levels=cfg["hash.levels"], table_size_log2=cfg["hash.table_size_log2"],
                features_per_entry=cfg["hash.features"], coarsest_resolution=cfg["hash.coarsest_resolution"],
                growth_factor=cfg["hash.growth"] or None, finest_resolution=cfg["hash.finest_resolution"] or None,
                hidden_width=cfg["model.hidden_width"], hidden_layers=cfg["model.hidden_layers"],
                n_iter=cfg["train.iters"], learning_rate=cfg["train.lr"], weight_decay=cfg["train.weight_decay"],
                dtype=cfg["train.dtype"], transform=cfg["train.transform"], random_state=cfg["seed"])
    if method == "zerofill":
        return ZeroFilledReconstructor(cfg["train.transform"])
    if method == "hashinr":
        return HashINRReconstructor(lambda_tv=cfg["hashinr.lambda_tv"], lambda_lowrank=cfg["hashinr.lambda_lowrank"],
                                    **grid)
    return DAINRReconstructor(spatial_bands=cfg["model.spatial_bands"], temporal_bands=cfg["model.temporal_bands"],
                              use_features=cfg["model.features"], feature_channels=cfg["model.feature_channels"],
                              canonical_frame=cfg["model.canonical_frame"], resample=cfg["model.resample"],
                              frame_schedule=cfg["train.schedule"], early_stop_window=cfg["train.early_stop_window"],
                              early_stop_tol=cfg["train.early_stop_tol"], **grid)


def _check_interpolation(cfg: dict, bundle) -> None:
    mode, factor = cfg["interp.mode"], cfg["interp.factor"]
    if mode == "none":
        return
    if cfg["method"] != "dainr":
        raise ConfigError(f"interpolation is only supported for method=dainr, not {cfg['method']}")
    if bundle.acquisition is None:
        raise ConfigError("interpolation needs a radial dataset")
    if mode == "temporal":
        if bundle.acquisition.n_frames < 4:
            raise ConfigError(f"temporal interpolation needs at least 4 frames; dataset has "
                              f"{bundle.acquisition.n_frames}")
        if factor not in TEMPORAL_FACTORS:
            raise ConfigError(f"temporal factor must be one of {TEMPORAL_FACTORS}, got {factor:g}")
    else:
        if bundle.ground_truth is None:
            raise ConfigError("spatial interpolation re-simulates from ground truth, which the dataset lacks")
        if factor not in SPATIAL_FACTORS:
            raise ConfigError(f"spatial factor must be one of {SPATIAL_FACTORS}, got {factor:g}")


def _save_params(model, path: Path) -> None:
    """Raw little-endian dump of a model without a config round trip (HashINR)."""
    path.mkdir(parents=True, exist_ok=True)
    entries, blobs, offset = [], [], 0
    for i, p in enumerate(model.parameters()):
        blob = np.ascontiguousarray(p.data, dtype=np.dtype(p.data.dtype).newbyteorder("<")).tobytes()
        entries.append({"index": i, "shape": list(p.data.shape), "offset": offset, "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    (path / "params.bin").write_bytes(b"".join(blobs))
    (path / "manifest.json").write_text(json.dumps({"format": "dainr-params", "dtype": str(model.dtype),
                                                    "tensors": entries}, indent=2, sort_keys=True) + "\n")


def cmd_reconstruct(cfg: dict) -> Path:
    from .interpolation import train_interpolation

    bundle = load_dataset(_require(cfg, "dataset"))
    _check_interpolation(cfg, bundle)
    out = ensure_output_dir(_require(cfg, "out"), cfg["force"])
    est = _estimator(cfg)
    meta = {"method": cfg["method"], "interp_mode": cfg["interp.mode"]}

    if cfg["interp.mode"] == "none":
        if bundle.acquisition is None:
            raise ConfigError("reconstruction needs a radial acquisition; this dataset is cartesian")
        frames = est.fit(bundle.acquisition).predict()
    else:
        acq = bundle.acquisition
        res = train_interpolation(cfg["interp.mode"], cfg["interp.factor"], acq, bundle.ground_truth,
                                  bundle.coil_maps, acq.spokes_per_frame, est, start_index=acq.start_index) \
            if cfg["interp.mode"] == "spatial" else \
            train_interpolation("temporal", cfg["interp.factor"], acq, estimator=est)
        est, frames = res.estimator, res.frames
        meta.update(train_size=res.train_size, train_frames=[int(f) for f in res.train_frames],
                    scale=res.scale)

    save_reconstruction(out, frames, meta)
    write_previews(out / "previews", frames, png=cfg["output.png"])
    if isinstance(est, DAINRReconstructor):
        est.save(out / "checkpoint")
    elif isinstance(est, HashINRReconstructor):
        _save_params(est.model_, out / "checkpoint")
    if hasattr(est, "loss_trace_"):
        write_loss_trace(est.loss_trace_, out / "loss_trace.csv")
    _write_config(out, cfg)
    log.info("wrote %d frames to %s", frames.shape[0], out)
    return out


def cmd_evaluate(cfg: dict, recon: str, dataset: str | None, roi_files: list[str], roi_only: bool = False) -> Path:
    frames, _ = load_reconstruction(recon)
    ref, rois = None, {}
    if dataset:
        bundle = load_dataset(dataset)
        ref, rois = bundle.ground_truth, dict(bundle.rois)
    for f in roi_files:
        rois[Path(f).stem] = read_mask(f, frames.shape[-1])
    if roi_only:
        ref = None
    elif ref is None:
        raise ConfigError("PSNR/SSIM need ground truth; pass a dataset with ground truth or use --roi-only")
    if ref is not None and ref.shape != frames.shape:
        raise ConfigError(f"reconstruction {frames.shape} and ground truth {ref.shape} differ in shape")
    if ref is None and not rois:
        raise ConfigError("nothing to evaluate: no ground truth and no ROI masks")
    if rois:
        rois = {k: v for k, v in rois.items() if v.shape == frames.shape[-2:]}
    out = ensure_output_dir(cfg["out"] or Path(recon) / "evaluation", cfg["force"])
    report = evaluate_sequence(frames, ref, rois)
    report.write_csv(out / "metrics.csv")
    if ref is not None:
        write_previews(out / "error_maps", error_maps(ref, frames), prefix="error", png=cfg["output.png"])
        write_raw(out / "error_maps.f32", error_maps(ref, frames))
        log.info("mean PSNR %.2f dB, mean SSIM %.4f", report.mean_psnr, report.mean_ssim)
    _write_config(out, cfg)
    return out


# ---------------------------------------------------------------------------
# argument parsing

def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--force", action="store_true", default=None, help="overwrite a non-empty output directory")
    common.add_argument("--method", choices=METHODS)
    common.add_argument("--spokes", type=int, help="spokes per frame")
    common.add_argument("--iters", type=int, help="training iterations")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="dainr", description="Dynamic MRI reconstruction with deformation-aware INRs.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="simulate a phantom dataset")
    for name in ("reconstruct", "interpolate"):
        p = sub.add_parser(name, parents=[common], help=f"{name} a dataset")
        p.add_argument("--dataset", help="dataset directory")
        if name == "interpolate":
            p.add_argument("--mode", choices=("spatial", "temporal"))
            p.add_argument("--factor", type=float)
    p = sub.add_parser("evaluate", parents=[common], help="score a reconstruction")
    p.add_argument("recon", help="reconstruction directory")
    p.add_argument("dataset", nargs="?", help="dataset directory with ground truth and ROIs")
    p.add_argument("--roi", action="append", default=[], help="extra ROI mask file (raw float32 N x N)")
    p.add_argument("--roi-only", action="store_true", help="skip PSNR/SSIM and report ROI curves only")
    return parser


def _overrides(args) -> dict:
    out = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        try:
            out[key.strip()] = json.loads(value)
        except json.JSONDecodeError:
            out[key.strip()] = value
    flags = {"out": args.out, "seed": args.seed, "force": args.force, "method": args.method,
             "acquisition.spokes": args.spokes, "train.iters": args.iters,
             "dataset": getattr(args, "dataset", None) if args.command != "evaluate" else None,
             "interp.mode": getattr(args, "mode", None), "interp.factor": getattr(args, "factor", None)}
    out.update({k: v for k, v in flags.items() if v is not None})
    return out


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s: %(message)s")
    try:
        file_values = parse_config(Path(args.config).read_text()) if args.config else {}
        cfg = resolve_config(file_values, _overrides(args))
        if args.command == "simulate":
            cmd_simulate(cfg)
        elif args.command == "reconstruct":
            cmd_reconstruct(cfg)
        elif args.command == "interpolate":
            if cfg["interp.mode"] == "none":
                raise ConfigError("interpolate needs --mode spatial|temporal (or interp.mode in the config)")
            if cfg["method"] != "dainr":
                raise ConfigError("interpolate only supports method=dainr")
            cmd_reconstruct(cfg)
        else:
            cmd_evaluate(cfg, args.recon, args.dataset, args.roi, args.roi_only)
    except (ValueError, TypeError, OSError, FloatingPointError) as exc:
        print(f"dainr {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
