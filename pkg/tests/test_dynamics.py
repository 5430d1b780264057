"""Reduced-step machinery: fixed points, the shared-kernel exactness
invariant, sample inference, and the POD run path."""

import numpy as np
import pytest

import fieldrom as fr
from fieldrom.dynamics import (
    InversionConfig,
    LatentState,
    LinearGridField,
    NeuralGridField,
    SampleSet,
    infer_full_space,
    pde_targets,
    rom_step,
)
from fieldrom.errors import ValidationError
from fieldrom.mlp import finite_difference_jacobian
from fieldrom.pde import step_full


def _all_samples(spec):
    return SampleSet.from_indices(np.arange(spec.n_points), spec.coordinates())


def test_sample_set_rejects_duplicates_and_out_of_range():
    coords = np.linspace(0, 1, 10)[:, None]
    with pytest.raises(ValidationError):
        SampleSet.from_indices([1, 1, 2], coords)
    with pytest.raises(ValidationError):
        SampleSet.from_indices([0, 10], coords)


def test_well_posedness_guard():
    with pytest.raises(ValidationError):
        fr.check_well_posed(3, 1, 4)
    fr.check_well_posed(4, 1, 4)
    fr.check_well_posed(2, 2, 4)


def test_rollout_rejects_underdetermined_sample_set(heat_embedding, heat_dataset):
    spec = heat_dataset.spec.with_params(heat_dataset.params[0])
    field = NeuralGridField(heat_embedding)
    samples = SampleSet.from_indices([10, 20], spec.coordinates())
    q0 = heat_embedding.transform(heat_dataset.fields[0, 0].reshape(1, -1))[0]
    with pytest.raises(ValidationError, match="ill-posed"):
        fr.rom_rollout(field, q0, samples, spec)


def test_zero_dt_step_is_identity_at_interior_samples(heat_embedding, heat_dataset):
    spec = heat_dataset.spec.with_params(heat_dataset.params[0])
    field = NeuralGridField(heat_embedding)
    samples = SampleSet.from_indices(np.arange(5, 95, 10), spec.coordinates())
    q = heat_embedding.transform(heat_dataset.fields[0, 3].reshape(1, -1))[0]
    state = LatentState(q=q)
    nxt, diag = rom_step(field, state, samples, spec, InversionConfig(), dt=0.0)
    assert diag.iterations == 0
    assert np.array_equal(nxt.q, q)
    assert np.array_equal(nxt.q_prev, q)
    assert nxt.n == 1


@pytest.mark.parametrize("kind", ["heat1d", "diffuse2d", "advect1d", "burgers1d"])
def test_full_sample_update_matches_full_order_stepper_bitwise(kind):
    """Step 2 with every grid point sampled == the full-order stepper applied
    to the decoder reconstruction, bit for bit (shared kernel code path)."""
    from fieldrom.experiments import INITIAL_CONDITIONS
    from tests.conftest import fit_quick

    spec = {
        "heat1d": fr.PdeSpec("heat1d", (1.0,), (41,), 1e-4, 4, (0.9, 0.3, 0.6)),
        "diffuse2d": fr.PdeSpec("diffuse2d", (1.0, 1.0), (12, 12), 1e-4, 4,
                                (0.2, 0.0, 0.2, 0.2)),
        "advect1d": fr.PdeSpec("advect1d", (1.0,), (40,), 0.01, 4, (1.0,)),
        "burgers1d": fr.PdeSpec("burgers1d", (100.0,), (40,), 0.05, 4, (0.02,)),
    }[kind]
    ds = fr.generate_trajectories(spec, INITIAL_CONDITIONS[kind], [list(spec.params)])
    emb = fit_quick(ds, latent_dim=2, width_factor=6, epochs=2, seed=3)
    field = NeuralGridField(emb)
    q = emb.transform(ds.fields[0, 1].reshape(1, -1))[0]
    samples = _all_samples(spec)
    targets, _, _ = pde_targets(field, LatentState(q=q), samples, spec, spec.dt)
    recon = field.reconstruct(q).reshape(-1)
    stepped = step_full(spec, recon)
    assert np.array_equal(targets.reshape(-1), stepped)


def test_pod_adapter_latent_jacobian_is_the_basis():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(25, 18))
    pod = fr.PodEmbedding(latent_dim=4).fit(x)
    field = LinearGridField(pod, d=1)
    idx = np.array([2, 7, 11])
    _, jac = field.values_jac_q(idx, rng.normal(size=4))
    assert np.array_equal(jac.reshape(3, 4), pod.components_[idx])


def test_infer_full_space_reconstruction_and_fdot(heat_embedding, heat_dataset):
    spec = heat_dataset.spec.with_params(heat_dataset.params[0])
    field = NeuralGridField(heat_embedding)
    samples = SampleSet.from_indices(np.arange(10, 90, 7), spec.coordinates())
    q = heat_embedding.transform(heat_dataset.fields[0, 0].reshape(1, -1))[0]
    state = LatentState(q=q)
    inf = infer_full_space(field, state, samples, spec)
    direct = field.values(samples.indices, q)
    assert np.array_equal(inf.values, direct)
    assert np.array_equal(inf.f_dot, np.zeros_like(direct))  # q_dot(0) = 0
    # with a previous latent, f_dot = (dg/dq) qdot
    q_prev = q + 0.01
    state2 = LatentState(q=q, q_prev=q_prev, n=1)
    inf2 = infer_full_space(field, state2, samples, spec)
    _, jac = field.values_jac_q(samples.indices, q)
    expected = jac @ state2.q_dot(spec.dt)
    assert np.allclose(inf2.f_dot, expected, rtol=1e-12)
    assert inf.laplacian is not None


def test_infer_analytic_gradient_matches_fd(advection_embedding, advection_dataset):
    spec = advection_dataset.spec.with_params(advection_dataset.params[0])
    field = NeuralGridField(advection_embedding)
    samples = SampleSet.from_indices(np.arange(3, 47, 5), spec.coordinates())
    q = advection_embedding.transform(advection_dataset.fields[0, 2].reshape(1, -1))[0]
    inf = infer_full_space(field, LatentState(q=q), samples, spec,
                           gradient_mode="analytic")
    emb = advection_embedding
    for j, idx in enumerate(samples.indices[:4]):
        x0 = spec.coordinates()[idx]
        fd = finite_difference_jacobian(
            lambda x: emb.decode(x[None, :], q).reshape(-1), x0, h=1e-6
        )
        assert np.max(np.abs(inf.grad_x[j] - fd)) <= 1e-5 * max(1.0, np.abs(fd).max())


def test_stencil_second_derivative_against_nested_differentiation(heat_dataset):
    """Network-stencil u_xx vs nested differentiation (central FD of the
    analytic first derivative at tiny h): truncation decays at O(dx^2).

    Needs a twice-continuously-differentiable net, so a sine decoder; an ELU
    net is only C^1 and its second derivative jumps across kink hyperplanes.
    """
    from tests.conftest import fit_quick

    emb = fit_quick(heat_dataset, latent_dim=3, width_factor=12, epochs=40,
                    schedule=(10.0, 2.0), seed=1, activation="siren")
    q = np.random.default_rng(8).normal(size=emb.latent_dim) * 0.5

    def true_uxx(x):
        h = 1e-5
        _, gp = emb.decode_with_spatial_jacobian(np.array([[x + h]]), q)
        _, gm = emb.decode_with_spatial_jacobian(np.array([[x - h]]), q)
        return (gp[0, 0, 0] - gm[0, 0, 0]) / (2 * h)

    def stencil_uxx(x, dx):
        pts = np.array([[x - dx], [x], [x + dx]])
        vals = emb.decode(pts, q).reshape(-1)
        return (vals[0] + vals[2] - 2 * vals[1]) / dx**2

    for x0 in (0.43, 0.61):
        truth = true_uxx(x0)
        scale = max(abs(truth), 1e-300)
        err_coarse = abs(stencil_uxx(x0, 4e-3) - truth)
        err_fine = abs(stencil_uxx(x0, 2e-3) - truth)
        assert err_coarse <= 5e-2 * scale
        # halving dx divides a second-order truncation error by about four
        assert 2.5 <= err_coarse / max(err_fine, 1e-300) <= 6.0


def test_one_sided_stencil_warns_at_domain_edge(heat_embedding, heat_dataset):
    spec = heat_dataset.spec.with_params(heat_dataset.params[0])
    field = NeuralGridField(heat_embedding)
    samples = SampleSet.from_indices([0, 50], spec.coordinates())
    q = np.zeros(heat_embedding.latent_dim)
    with pytest.warns(UserWarning, match="one-sided"):
        infer_full_space(field, LatentState(q=q), samples, spec)


def test_pod_full_rank_run_matches_full_order(heat_dataset):
    spec = heat_dataset.spec.with_params(heat_dataset.params[0])
    x = heat_dataset.snapshot_matrix()
    pod = fr.PodEmbedding(latent_dim=min(x.shape) - 1).fit(x)
    run = fr.pod_rom_run(pod, spec, heat_dataset.fields[0, 0])
    truth = heat_dataset.fields[0]
    assert fr.relative_l2(run.reconstruction, truth) <= 1e-8


def test_rom_step_records_timings(heat_embedding, heat_dataset):
    spec = heat_dataset.spec.with_params(heat_dataset.params[0])
    field = NeuralGridField(heat_embedding)
    samples = SampleSet.from_indices(np.arange(2, 99, 12), spec.coordinates())
    q0 = heat_embedding.transform(heat_dataset.fields[0, 0].reshape(1, -1))[0]
    run = fr.rom_rollout(field, q0, samples, spec, steps=3)
    assert set(run.timings) == {"inference", "stepping", "inversion"}
    assert len(run.diagnostics) == 3
    assert run.latents.shape == (4, heat_embedding.latent_dim)


def test_latent_csv_rows_shape(heat_embedding, heat_dataset):
    spec = heat_dataset.spec.with_params(heat_dataset.params[0])
    field = NeuralGridField(heat_embedding)
    samples = _all_samples(spec)
    q0 = heat_embedding.transform(heat_dataset.fields[0, 0].reshape(1, -1))[0]
    run = fr.rom_rollout(field, q0, samples, spec, steps=2)
    rows = run.latent_csv_rows(spec.dt)
    assert rows[0][:2] == ["n", "t"]
    assert len(rows) == 4  # header + 3 states
    assert len(rows[1]) == 2 + heat_embedding.latent_dim + 2


def test_encode_initial_distinct_and_shared(heat_embedding, heat_dataset):
    s0 = fr.encode_initial(heat_embedding, heat_dataset.fields[0, 0])
    s1 = fr.encode_initial(heat_embedding, heat_dataset.fields[0, 5])
    assert s0.q_prev is None and s0.n == 0
    assert np.linalg.norm(s0.q - s1.q) > 0.0
    # both trajectories share the initial condition, so q0 must coincide
    s_other = fr.encode_initial(heat_embedding, heat_dataset.fields[1, 0])
    assert np.array_equal(s0.q, s_other.q)


def test_encode_initial_wrong_resolution_rejected(heat_embedding):
    from fieldrom.errors import DiscretizationMismatchError

    with pytest.raises(DiscretizationMismatchError):
        fr.encode_initial(heat_embedding, np.zeros(77))
