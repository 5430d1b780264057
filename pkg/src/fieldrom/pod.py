"""Linear-subspace baseline: proper orthogonal decomposition of snapshots.

Mean-centered thin SVD of the snapshot matrix; the leading left singular
vectors form the basis.  Exposes the same transformer surface as the neural
embedding so both plug into the identical reduced time-stepping path (POD is
simply the linear special case of the decoder).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .errors import ValidationError
from .modelio import load_arrays, save_arrays


class PodEmbedding(BaseEstimator, TransformerMixin):
    """Rank-r orthogonal projection of snapshot vectors.

    Attributes after ``fit``: ``mean_`` (n_features,), ``components_``
    (n_features, r) with orthonormal columns, ``singular_values_`` (all of
    them, for truncation-error accounting).
    """

    def __init__(self, latent_dim: int = 2):
        self.latent_dim = latent_dim

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        n, f = X.shape
        r = self.latent_dim
        if r < 1 or r > min(n, f):
            raise ValidationError(
                f"latent_dim={r} not in [1, min(n_snapshots, n_features)={min(n, f)}]"
            )
        self.mean_ = X.mean(axis=0)
        centered = X - self.mean_
        u, s, vt = np.linalg.svd(centered.T, full_matrices=False)
        # deterministic sign: largest-magnitude entry of each column positive
        flip = np.sign(u[np.argmax(np.abs(u), axis=0), np.arange(u.shape[1])])
        flip[flip == 0.0] = 1.0
        u = u * flip
        self.components_ = u[:, :r].copy()
        self.singular_values_ = s.copy()
        self.n_features_in_ = f
        return self

    def transform(self, X):
        """L2-optimal latent coordinates: U^T (x - mean)."""
        check_is_fitted(self, "components_")
        X = check_array(X, dtype=np.float64)
        return (X - self.mean_) @ self.components_

    def inverse_transform(self, Q):
        check_is_fitted(self, "components_")
        Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
        return Q @ self.components_.T + self.mean_

    def truncation_error(self) -> float:
        """Eckart-Young: Frobenius reconstruction residual of the training
        matrix equals sqrt(sum of squared discarded singular values)."""
        check_is_fitted(self, "components_")
        tail = self.singular_values_[self.latent_dim :]
        return float(np.sqrt(np.sum(tail**2)))

    def storage_entries(self) -> int:
        """Stored float count: basis plus mean; grows linearly with the
        discretization size."""
        check_is_fitted(self, "components_")
        return int(self.components_.size + self.mean_.size)

    def save(self, stem) -> None:
        check_is_fitted(self, "components_")
        save_arrays(
            stem,
            {
                "mean": self.mean_,
                "singular_values": self.singular_values_,
                "components": self.components_,
            },
            kind="pod",
            meta={"latent_dim": int(self.latent_dim)},
        )

    @classmethod
    def load(cls, stem) -> "PodEmbedding":
        named, meta = load_arrays(stem, kind="pod")
        pod = cls(latent_dim=int(meta["latent_dim"]))
        pod.mean_ = named["mean"]
        pod.singular_values_ = named["singular_values"]
        pod.components_ = named["components"]
        pod.n_features_in_ = named["components"].shape[0]
        return pod
