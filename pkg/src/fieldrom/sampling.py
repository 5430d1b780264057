"""Integration-sample selection.

The greedy selector grows the sample set one grid index at a time: run the
reduced model on every training parameter with the current samples, score the
final-time pointwise reconstruction residuals, try the Q worst points as
candidate additions, and keep whichever candidate lowers the global metric
(mean + max of the residual vector) the most.  Uniform and seeded-random
baselines are provided for comparison.  Selection is strictly a
pre-computation: the model is never mutated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import (
    InversionConfig,
    SampleSet,
    check_well_posed,
    encode_initial,
    rom_rollout,
)
from .errors import DivergenceError, InversionError, ValidationError


@dataclass
class GreedyConfig:
    """Stopping and search parameters for the greedy selector.

    Either ``target_accuracy`` (a positive threshold on the residual metric,
    0 means "never satisfied") or ``max_samples`` must bound the loop.
    ``candidates`` is the number of worst-residual grid points tried per
    iteration.
    """

    target_accuracy: float = 0.0
    candidates: int = 10
    max_samples: int | None = None
    seed: int = 0

    def validate(self) -> "GreedyConfig":
        if self.candidates < 1:
            raise ValidationError("candidate count must be >= 1")
        if not self.target_accuracy > 0.0 and self.max_samples is None:
            raise ValidationError(
                "greedy selection needs target_accuracy > 0 or a max_samples cap"
            )
        return self


def residual_metric(res_vec) -> float:
    """mean(res_vec) + max(res_vec); any infinite entry dominates."""
    res_vec = np.asarray(res_vec, dtype=np.float64)
    if res_vec.size == 0:
        raise ValidationError("empty residual vector")
    return float(np.mean(res_vec) + np.max(res_vec))


def calculate_residual(field, dataset, samples: SampleSet, spec,
                       inversion: InversionConfig | None = None,
                       allow_underdetermined: bool = False) -> np.ndarray:
    """Per-grid-point residual accumulated over the training parameters.

    For each training parameter, run the latent dynamics to the final step
    using only ``samples`` and add the pointwise norm of (reconstruction -
    truth) at the final time.  A diverged run contributes +inf everywhere,
    flagged by the sentinel itself.
    """
    inversion = inversion or InversionConfig(mode="linearized")
    res_vec = np.zeros(dataset.n_points)
    steps = dataset.fields.shape[1] - 1
    for k in range(dataset.n_params):
        sub = spec.with_params(dataset.params[k])
        state0 = encode_initial(field.embedding, dataset.fields[k, 0].reshape(1, -1))
        try:
            run = rom_rollout(
                field,
                state0.q,
                samples,
                sub,
                inversion=inversion,
                steps=steps,
                record_full=False,
                allow_underdetermined=allow_underdetermined,
            )
            final = field.reconstruct(run.latents[-1])
        except (DivergenceError, InversionError):
            res_vec[:] = np.inf
            return res_vec
        diff = final - dataset.fields[k, -1]
        res_vec += np.linalg.norm(diff, axis=1)
    return res_vec


def greedy_select(field, dataset, spec, config: GreedyConfig,
                  inversion: InversionConfig | None = None):
    """Grow an integration-sample set until the residual metric meets the
    target (or the cap is hit).

    Starts from one uniformly-random grid index.  Returns ``(samples, trace)``
    where ``trace`` records the metric after every accepted addition plus a
    ``converged`` flag.  While the set is still too small for a well-posed
    inversion the internal runs fall back to flagged regularized solves.
    """
    config.validate()
    inversion = inversion or InversionConfig(mode="linearized")
    rng = np.random.default_rng(config.seed)
    grid_coords = spec.coordinates()
    p = dataset.n_points
    first = int(rng.integers(0, p))
    samples = SampleSet.from_indices([first], grid_coords)
    cap = p if config.max_samples is None else min(config.max_samples, p)

    trace = {"initial_index": first, "metric": [], "converged": False, "seed": config.seed}

    res_vec = calculate_residual(
        field, dataset, samples, spec, inversion, allow_underdetermined=True
    )
    metric = residual_metric(res_vec)
    trace["metric"].append(metric)
    while True:
        if metric < config.target_accuracy:
            trace["converged"] = True
            break
        if len(samples) >= cap:
            break
        free = np.setdiff1d(np.arange(p), samples.indices, assume_unique=False)
        # rank by (residual descending, index ascending) and keep the Q worst
        order = np.lexsort((free, -res_vec[free]))
        candidates = free[order[: config.candidates]]
        best = None
        for cand in candidates:
            trial = samples.union(int(cand), grid_coords)
            trial_res = calculate_residual(
                field, dataset, trial, spec, inversion, allow_underdetermined=True
            )
            trial_metric = residual_metric(trial_res)
            key = (trial_metric, int(cand))
            if best is None or key < best[0]:
                best = (key, trial, trial_res)
        (metric, _), samples, res_vec = best
        trace["metric"].append(metric)
    trace["n_samples"] = len(samples)
    return samples, trace


def baseline_samples(kind: str, count: int, spec, r: int, seed: int = 0) -> SampleSet:
    """Uniform (evenly strided, both ends included) or seeded-random samples."""
    p = spec.n_points
    if count > p:
        raise ValidationError(f"cannot pick {count} samples from {p} grid points")
    check_well_posed(count, spec.d, r)
    grid_coords = spec.coordinates()
    if kind == "uniform":
        idx = np.unique(np.round(np.linspace(0, p - 1, count)).astype(np.int64))
        return SampleSet.from_indices(idx, grid_coords)
    if kind == "random":
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(p, size=count, replace=False))
        return SampleSet.from_indices(idx, grid_coords)
    raise ValidationError(f"unknown baseline sampling kind {kind!r}")
