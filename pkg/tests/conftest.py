"""Shared fixtures: tiny datasets and quickly-fitted embeddings.

The unit tests exercise solver machinery, not model quality, so a couple of
epochs is enough to get a structurally valid fitted embedding.
"""

import warnings

import numpy as np
import pytest

import fieldrom as fr
from fieldrom.experiments import advection_initial, thermo_initial


def fit_quick(dataset, latent_dim=2, width_factor=8, epochs=3, seed=0,
              activation="elu", schedule=(1.0,)):
    emb = fr.NeuralFieldEmbedding(
        latent_dim=latent_dim,
        width_factor=width_factor,
        activation=activation,
        lr_schedule=schedule,
        epochs_per_stage=epochs,
        batch_size=8,
        seed=seed,
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        emb.fit(dataset.snapshot_matrix(), coords=dataset.coords)
    return emb


@pytest.fixture(scope="session")
def advection_dataset():
    spec = fr.PdeSpec(
        kind="advect1d", extent=(1.0,), grid=(50,), dt=0.01, steps=30, params=(1.0,)
    )
    return fr.generate_trajectories(spec, advection_initial, [[1.0]])


@pytest.fixture(scope="session")
def heat_dataset():
    p = 101
    dx = 1.0 / (p - 1)
    spec = fr.PdeSpec(
        kind="heat1d", extent=(1.0,), grid=(p,), dt=0.4 * dx * dx, steps=20,
        params=(1.0, 1.0, 1.0),
    )
    return fr.generate_trajectories(
        spec, thermo_initial, [[0.9, 0.3, 0.6], [0.2, 1.0, 0.5]]
    )


@pytest.fixture(scope="session")
def heat_embedding(heat_dataset):
    # trained just enough to be smooth and non-degenerate
    return fit_quick(heat_dataset, latent_dim=3, width_factor=12, epochs=40,
                     schedule=(10.0, 2.0), seed=1)


@pytest.fixture(scope="session")
def advection_embedding(advection_dataset):
    return fit_quick(advection_dataset, latent_dim=2, width_factor=10, epochs=40,
                     schedule=(10.0, 2.0), seed=2)
