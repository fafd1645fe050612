"""Frame-wise image quality metrics and ROI signal curves."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

PSNR_EXACT = math.inf  # written as "exact" in reports

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def normalize_sequence(d) -> np.ndarray:
    """Magnitudes rescaled to ``[0, 1]`` with one min/max over the whole sequence."""
    mag = np.abs(np.asarray(d))
    lo, hi = mag.min(), mag.max()
    if hi <= lo:
        raise ValueError("cannot normalize a constant sequence")
    return (mag - lo) / (hi - lo)


def psnr(ref, test, data_range: float = 1.0) -> float:
    ref = np.asarray(ref, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if ref.shape != test.shape:
        raise ValueError(f"shape mismatch {ref.shape} vs {test.shape}")
    mse = float(np.mean((ref - test) ** 2))
    if mse == 0.0:
        return PSNR_EXACT
    return 10.0 * math.log10(data_range**2 / mse)


def ssim(ref, test, data_range: float = 1.0) -> float:
    """Mean SSIM with an 11-tap Gaussian window (sigma 1.5).

    Local statistics use the population (biased) estimators; the mean is taken
    over pixels whose window lies fully inside the image.
    """
    x = np.asarray(ref, dtype=np.float64)
    y = np.asarray(test, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    if x.ndim != 2 or min(x.shape) < SSIM_WINDOW:
        raise ValueError(f"SSIM needs 2-D frames of at least {SSIM_WINDOW} pixels per side")
    truncate = ((SSIM_WINDOW - 1) / 2) / SSIM_SIGMA

    def blur(a):
        return gaussian_filter(a, SSIM_SIGMA, truncate=truncate, mode="reflect")

    mx, my = blur(x), blur(y)
    sxx = blur(x * x) - mx * mx
    syy = blur(y * y) - my * my
    sxy = blur(x * y) - mx * my
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    smap = ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2))
    pad = (SSIM_WINDOW - 1) // 2
    return float(smap[pad:-pad, pad:-pad].mean())


def roi_curve(d, mask) -> np.ndarray:
    """Mean magnitude inside ``mask`` for every frame."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("ROI mask is empty")
    mag = np.abs(np.asarray(d))
    if mag.shape[-2:] != mask.shape:
        raise ValueError(f"mask shape {mask.shape} does not match frames {mag.shape[-2:]}")
    return mag[:, mask].mean(axis=1)


def error_maps(ref, test) -> np.ndarray:
    """``|ref - test|`` on sequence-normalized magnitudes."""
    return np.abs(normalize_sequence(ref) - normalize_sequence(test))


@dataclass
class MetricReport:
    psnr: list[float] = field(default_factory=list)
    ssim: list[float] = field(default_factory=list)
    roi: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def mean_psnr(self) -> float:
        return float(np.mean(self.psnr)) if self.psnr else math.nan

    @property
    def mean_ssim(self) -> float:
        return float(np.mean(self.ssim)) if self.ssim else math.nan

    @property
    def n_frames(self) -> int:
        if self.psnr:
            return len(self.psnr)
        return len(next(iter(self.roi.values()))) if self.roi else 0

    def write_csv(self, path) -> None:
        has_gt = bool(self.psnr)
        names = sorted(self.roi)
        header = ["frame"] + (["psnr_db", "ssim"] if has_gt else []) + names
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for t in range(self.n_frames):
                row = [t]
                if has_gt:
                    p = self.psnr[t]
                    row += ["exact" if p == PSNR_EXACT else f"{p:.6f}", f"{self.ssim[t]:.6f}"]
                row += [f"{float(self.roi[n][t]):.6g}" for n in names]
                w.writerow(row)


def evaluate_sequence(test, ref=None, rois: dict[str, np.ndarray] | None = None) -> MetricReport:
    """Frame-wise PSNR/SSIM against ``ref`` (if given) and ROI curves of ``test``."""
    report = MetricReport()
    if ref is not None:
        r, x = normalize_sequence(ref), normalize_sequence(test)
        if r.shape != x.shape:
            raise ValueError(f"reference {r.shape} and test {x.shape} differ in shape")
        report.psnr = [psnr(a, b) for a, b in zip(r, x)]
        report.ssim = [ssim(a, b) for a, b in zip(r, x)]
    for name, mask in (rois or {}).items():
        report.roi[name] = roi_curve(test, mask)
    return report
