"""Error metrics used across reports: MSE, relative L2, PSNR."""

from __future__ import annotations

import numpy as np


def mse(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def relative_l2(a, reference) -> float:
    """||a - reference|| / ||reference||; infinity when the reference is zero."""
    a = np.asarray(a, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if a.shape != reference.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {reference.shape}")
    denom = float(np.linalg.norm(reference))
    num = float(np.linalg.norm(a - reference))
    if denom == 0.0:
        return 0.0 if num == 0.0 else float("inf")
    return num / denom


def psnr(a, reference) -> float:
    """10 log10(range^2 / MSE) with the range taken from the reference;
    +inf for an exact match."""
    err = mse(a, reference)
    reference = np.asarray(reference, dtype=np.float64)
    rng = float(reference.max() - reference.min())
    if err == 0.0:
        return float("inf")
    if rng == 0.0:
        return float("-inf")
    return 10.0 * np.log10(rng * rng / err)


def evaluate(a, reference) -> dict:
    return {
        "mse": mse(a, reference),
        "relative_l2": relative_l2(a, reference),
        "psnr": psnr(a, reference),
    }
