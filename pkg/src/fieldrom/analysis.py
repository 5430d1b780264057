"""Post-run analysis: latent-trajectory PCA, time-step stability sweep, and
dimension-reduction bookkeeping."""

from __future__ import annotations

import warnings

import numpy as np

from . import pde as pdemod
from .dynamics import rom_rollout
from .errors import DivergenceError, InversionError
from .metrics import relative_l2

STABILITY_FACTOR = 10.0  # bounded means max-norm stays under 10x the initial


def latent_pca(latents):
    """Project a latent trajectory onto its first two principal components.

    Returns ``(scores, info)`` with scores shaped (n_steps, 2).  For a
    one-dimensional latent space the second component is zero-filled and
    flagged.
    """
    q = np.asarray(latents, dtype=np.float64)
    if q.ndim != 2 or q.shape[0] < 2:
        raise ValueError("latent PCA needs at least two latent snapshots")
    center = q.mean(axis=0)
    centered = q - center
    u, s, vt = np.linalg.svd(centered, full_matrices=False)
    scores = np.zeros((q.shape[0], 2))
    n_comp = min(2, vt.shape[0])
    scores[:, :n_comp] = centered @ vt[:n_comp].T
    info = {
        "flagged_rank_deficient": q.shape[1] < 2,
        "singular_values": s,
        "components": vt[:n_comp],
        "center": center,
    }
    if q.shape[1] < 2:
        warnings.warn("latent dimension is 1; second principal component zero-filled")
    return scores, info


def latent_line_samples(q_a, q_b, n_inside: int = 9, n_outside: int = 2):
    """Latent vectors on the line through q_a and q_b.

    ``n_inside`` interpolation points include both endpoints exactly;
    ``n_outside`` extrapolation points extend past each end with the same
    spacing.  Returns ``(alphas, samples)``.
    """
    q_a = np.asarray(q_a, dtype=np.float64)
    q_b = np.asarray(q_b, dtype=np.float64)
    if n_inside < 2:
        raise ValueError("need at least the two endpoints")
    step = 1.0 / (n_inside - 1)
    alphas = np.concatenate(
        [
            -step * np.arange(n_outside, 0, -1),
            np.linspace(0.0, 1.0, n_inside),
            1.0 + step * np.arange(1, n_outside + 1),
        ]
    )
    samples = np.empty((alphas.size, q_a.size))
    for i, a in enumerate(alphas):
        samples[i] = (1.0 - a) * q_a + a * q_b
    # endpoints are reproduced exactly, not just to rounding
    samples[n_outside] = q_a
    samples[n_outside + n_inside - 1] = q_b
    return alphas, samples


def _bounded_verdict(trajectory, initial):
    limit = STABILITY_FACTOR * max(float(np.max(np.abs(initial))), 1e-300)
    peak = float(np.max(np.abs(trajectory)))
    return ("stable" if peak <= limit else "diverged"), peak


def stability_sweep(spec, u0, field, samples, multipliers, inversion=None,
                    gradient_mode: str = "stencil"):
    """Run full-order and reduced models at scaled time steps.

    For each multiplier both models take ``spec.steps`` steps of size
    ``multiplier * spec.dt``; the verdict per model is "diverged" once the
    max-norm exceeds 10x the initial snapshot (overflow counts).  Where a
    model is stable its final state is also compared against a base-step
    full-order reference at the same physical time (when that time lands on a
    whole number of base steps).
    """
    u0 = np.asarray(u0, dtype=np.float64).reshape(-1)
    results = []
    for mult in multipliers:
        dt = float(mult) * spec.dt
        entry = {"multiplier": float(mult), "dt": dt}

        reference = None
        n_base = spec.steps * float(mult)
        if abs(n_base - round(n_base)) < 1e-9:
            try:
                ref_traj = pdemod.run_full_order(spec, u0, steps=int(round(n_base)))
                reference = ref_traj[-1]
            except DivergenceError:
                reference = None

        sub = pdemod.PdeSpec(
            kind=spec.kind, extent=spec.extent, grid=spec.grid,
            dt=dt, steps=spec.steps, params=spec.params,
        )
        try:
            fom = pdemod.run_full_order(sub, u0)
            entry["full_order"], entry["full_order_peak"] = _bounded_verdict(fom, u0)
            if entry["full_order"] == "stable" and reference is not None:
                entry["full_order_error"] = relative_l2(fom[-1], reference)
        except DivergenceError:
            entry["full_order"] = "diverged"

        try:
            q0 = field.embedding.transform(u0.reshape(1, -1))[0]
            run = rom_rollout(
                field, q0, samples, sub, inversion=inversion,
                gradient_mode=gradient_mode,
            )
            rec = run.reconstruction.reshape(run.reconstruction.shape[0], -1)
            entry["reduced"], entry["reduced_peak"] = _bounded_verdict(rec, u0)
            if entry["reduced"] == "stable" and reference is not None:
                entry["reduced_error"] = relative_l2(rec[-1], reference)
        except (DivergenceError, InversionError):
            entry["reduced"] = "diverged"
        results.append(entry)
    return results


def reduction_factors(p: int, d: int, r: int, n_samples=None) -> dict:
    """Dimension- and sample-reduction factors as conventionally reported:
    the state reduction is floored, the sample reduction rounded."""
    out = {
        "full_order_dof": int(p * d),
        "latent_dim": int(r),
        "dimension_reduction": int(p * d // r),
        "dimension_reduction_exact": p * d / r,
    }
    if n_samples:
        out["sample_count"] = int(n_samples)
        out["sample_reduction"] = int(round(p / n_samples))
        out["sample_reduction_exact"] = p / n_samples
    return out
