"""Latent PCA, line interpolation, stability sweep, reduction factors."""

import numpy as np
import pytest

import fieldrom as fr
from fieldrom.analysis import latent_line_samples, latent_pca, reduction_factors


def test_pca_constant_trajectory_all_points_identical():
    q = np.tile([0.3, -1.2, 0.7], (8, 1))
    scores, info = latent_pca(q)
    assert np.allclose(scores, 0.0, atol=1e-12)


def test_pca_collinear_latents_second_component_zero():
    t = np.linspace(0, 1, 20)[:, None]
    direction = np.array([[1.0, 2.0, -0.5, 0.25]])
    q = 3.0 + t * direction
    scores, info = latent_pca(q)
    assert np.max(np.abs(scores[:, 1])) <= 1e-10


def test_pca_r1_zero_filled_and_flagged():
    q = np.linspace(0, 1, 9)[:, None]
    with pytest.warns(UserWarning, match="zero-filled"):
        scores, info = latent_pca(q)
    assert info["flagged_rank_deficient"]
    assert np.array_equal(scores[:, 1], np.zeros(9))
    assert np.max(np.abs(scores[:, 0])) > 0.0


def test_pca_needs_two_snapshots():
    with pytest.raises(ValueError):
        latent_pca(np.ones((1, 4)))


def test_line_samples_endpoints_exact():
    rng = np.random.default_rng(0)
    qa, qb = rng.normal(size=5), rng.normal(size=5)
    alphas, samples = latent_line_samples(qa, qb, n_inside=7, n_outside=2)
    assert len(alphas) == 11
    inside = np.where(np.isclose(alphas, 0.0))[0][0]
    assert np.array_equal(samples[inside], qa)
    end = np.where(np.isclose(alphas, 1.0))[0][0]
    assert np.array_equal(samples[end], qb)
    # extrapolation points actually leave the segment
    assert alphas[0] < 0.0 and alphas[-1] > 1.0


def test_reduction_factors_reference_rows():
    # the four benchmark rows of the reduction-statistics table
    assert reduction_factors(501, 1, 16, 22)["dimension_reduction"] == 31
    assert reduction_factors(501, 1, 16, 22)["sample_reduction"] == 23
    image = reduction_factors(65_536, 1, 16, 63)
    assert image["dimension_reduction"] == 4096
    assert image["sample_reduction"] == 1040
    assert reduction_factors(100, 1, 1)["dimension_reduction"] == 100
    assert reduction_factors(256, 1, 2)["dimension_reduction"] == 128


def test_stability_sweep_baseline_multiplier_both_stable(
    heat_embedding, heat_dataset
):
    spec = heat_dataset.spec.with_params(heat_dataset.params[0])
    field = fr.NeuralGridField(heat_embedding)
    samples = fr.SampleSet.from_indices(
        np.arange(spec.n_points), spec.coordinates()
    )
    results = fr.stability_sweep(
        spec, heat_dataset.fields[0, 0], field, samples, multipliers=[1.0]
    )
    assert results[0]["full_order"] == "stable"
    assert results[0]["reduced"] in ("stable", "diverged")
    assert "full_order_error" in results[0]


def test_stability_sweep_full_order_diverges_past_cfl(heat_dataset):
    spec = heat_dataset.spec.with_params(heat_dataset.params[0])
    from fieldrom.analysis import _bounded_verdict
    from fieldrom.pde import run_full_order
    from fieldrom.errors import DivergenceError

    mult = 2.0 * spec.cfl_limit() / spec.dt
    bad = fr.PdeSpec(kind=spec.kind, extent=spec.extent, grid=spec.grid,
                     dt=mult * spec.dt, steps=spec.steps, params=spec.params)
    u0 = heat_dataset.fields[0, 0].reshape(-1)
    try:
        traj = run_full_order(bad, u0)
        verdict, _ = _bounded_verdict(traj, u0)
    except DivergenceError:
        verdict = "diverged"
    assert verdict == "diverged"
