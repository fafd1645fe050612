"""Shared oracles for the test suite."""
from __future__ import annotations

import numpy as np


def brute_force_dft(image: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Independent double-loop evaluation of sum_{y,x} img[y, x] exp(-i (kx x + ky y))."""
    n = image.shape[0]
    out = np.zeros(len(coords), dtype=np.complex128)
    for j, (kx, ky) in enumerate(coords):
        acc = 0j
        for row in range(n):
            for col in range(n):
                acc += image[row, col] * np.exp(-1j * (kx * (col - n // 2) + ky * (row - n // 2)))
        out[j] = acc
    return out


def central_difference_check(loss_fn, x: np.ndarray, analytic: np.ndarray, probes: int = 20, h: float = 1e-6,
                             seed: int = 0, floor: float = 1e-8) -> float:
    """Largest relative error between ``analytic`` and central differences at random entries of ``x``.

    ``loss_fn`` is re-evaluated after perturbing ``x`` in place.
    """
    rng = np.random.default_rng(seed)
    flat = x.reshape(-1)
    picks = rng.choice(flat.size, size=min(probes, flat.size), replace=False)
    worst = 0.0
    for i in picks:
        orig = flat[i]
        flat[i] = orig + h
        up = loss_fn()
        flat[i] = orig - h
        down = loss_fn()
        flat[i] = orig
        numeric = (up - down) / (2 * h)
        a = analytic.reshape(-1)[i]
        err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
        worst = max(worst, err)
    return worst


def adamw_reference(p: float, grads: list[float], lr=1e-3, b1=0.9, b2=0.999, eps=1e-8, wd=0.0) -> list[float]:
    """Scalar AdamW recurrence written out longhand."""
    m = v = 0.0
    out = []
    for t, g in enumerate(grads, start=1):
        p = p - lr * wd * p
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        p = p - lr * m_hat / (np.sqrt(v_hat) + eps)
        out.append(p)
    return out
