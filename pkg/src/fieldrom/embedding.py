"""Continuous field embedding: the trainable decoder/encoder pair.

:class:`NeuralFieldEmbedding` is a scikit-learn style transformer over
snapshot matrices.  ``fit`` jointly trains a coordinate-conditioned decoder
g(x, q) -> field value and a snapshot encoder e(f) -> q so that decoding the
encoded latent reproduces every training sample; ``transform`` encodes
snapshots to latent vectors and ``inverse_transform`` decodes latent vectors
back to fields on an arbitrary set of coordinates.

The decoder's parameter count depends only on (m, r, d, beta) - never on the
number of grid points - which is what makes the downstream reduced-order
solver's memory footprint resolution-independent.
"""

from __future__ import annotations

import time
import warnings

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import metrics
from .encoder import encoder_backprop, encoder_forward, init_encoder
from .errors import DiscretizationMismatchError, ValidationError
from .mlp import (
    AdamState,
    adam_step,
    backprop_from_cache,
    decoder_dims,
    init_mlp,
    mlp_forward,
    mlp_forward_cached,
    mlp_forward_with_jacobian,
)
from .standardize import fit_standardization

LR_SCHEDULE = (10.0, 5.0, 2.0, 1.0, 0.5, 0.2)
PAPER_EPOCHS_PER_STAGE = 30_000
DESK_EPOCHS_PER_STAGE = 2_000


class NeuralFieldEmbedding(BaseEstimator, TransformerMixin):
    """Nonlinear dimension reduction of PDE snapshots via a neural field.

    Parameters
    ----------
    latent_dim : int
        Dimension r of the latent vector.
    width_factor : int
        Hidden width of the decoder is ``width_factor * d`` (5 hidden layers).
    activation : {"elu", "siren"}
        Decoder activation family; also selects the coordinate preprocessing
        (z-scored for "elu", mapped to [-1, 1] for "siren").
    base_lr : float
        Adam base learning rate; the effective rate walks through
        ``lr_schedule`` times ``base_lr``, one training stage per entry.
    epochs_per_stage : int
        Epochs per schedule stage (desk default 2000).
    batch_size : int
        Snapshots per optimizer step.
    plateau_patience, plateau_tol :
        A stage stops early once the relative improvement of the epoch loss
        over ``plateau_patience`` epochs falls below ``plateau_tol``.
        Disabled when ``paper_faithful`` is set.
    """

    def __init__(
        self,
        latent_dim: int = 16,
        width_factor: int = 128,
        activation: str = "elu",
        omega0: float = 30.0,
        base_lr: float = 1e-4,
        lr_schedule: tuple = LR_SCHEDULE,
        epochs_per_stage: int = DESK_EPOCHS_PER_STAGE,
        batch_size: int = 16,
        seed: int = 0,
        plateau_patience: int = 200,
        plateau_tol: float = 1e-6,
        paper_faithful: bool = False,
        verbose: int = 0,
    ):
        self.latent_dim = latent_dim
        self.width_factor = width_factor
        self.activation = activation
        self.omega0 = omega0
        self.base_lr = base_lr
        self.lr_schedule = lr_schedule
        self.epochs_per_stage = epochs_per_stage
        self.batch_size = batch_size
        self.seed = seed
        self.plateau_patience = plateau_patience
        self.plateau_tol = plateau_tol
        self.paper_faithful = paper_faithful
        self.verbose = verbose

    # -- fitting -----------------------------------------------------------

    def fit(self, X, y=None, coords=None, d: int = 1):
        """Train decoder and encoder on a snapshot matrix.

        X is (n_snapshots, P*d) raw field values; ``coords`` is the shared
        (P, m) coordinate array of the discretization the snapshots live on.
        """
        X = check_array(X, dtype=np.float64)
        if coords is None:
            raise ValidationError("fit requires the snapshot coordinates")
        coords = check_array(coords, dtype=np.float64)
        if self.latent_dim < 1 or self.width_factor < 1:
            raise ValidationError("latent_dim and width_factor must be >= 1")
        p, m = coords.shape
        if X.shape[1] != p * d:
            raise DiscretizationMismatchError(
                f"snapshots have {X.shape[1]} values, expected P*d = {p * d}"
            )
        n = X.shape[0]
        r = self.latent_dim
        fields = X.reshape(n, p, d)

        stats = fit_standardization(fields, coords, self.activation)
        coords_std = stats.apply_coords(coords)
        f_std = stats.apply_fields(fields)

        rng = np.random.default_rng(self.seed)
        decoder = init_mlp(
            decoder_dims(m, r, d, self.width_factor),
            activation=self.activation,
            omega0=self.omega0,
            seed=int(rng.integers(0, 2**31 - 1)),
        )
        encoder = init_encoder(p, d, r, seed=int(rng.integers(0, 2**31 - 1)))

        history, aborted = self._train(decoder, encoder, coords_std, f_std, rng)

        self.coords_ = coords.copy()
        self.stats_ = stats
        self.decoder_ = decoder
        self.encoder_ = encoder
        self.m_ = m
        self.d_ = d
        self.n_points_ = p
        self.n_features_in_ = X.shape[1]
        self.loss_history_ = history
        self.training_aborted_ = aborted
        latents = self.transform(X)
        recon_std = self._decode_std_batch(latents)
        # reported final training loss (standardized units, the optimized objective)
        self.final_train_loss_ = metrics.mse(recon_std, f_std.reshape(n, p * d))
        self.final_mse_ = metrics.mse(self.stats_.invert_fields(
            recon_std.reshape(n, p, d)).reshape(n, p * d), X)
        return self

    def _train(self, decoder, encoder, coords_std, f_std, rng):
        n, p, d = f_std.shape
        m = coords_std.shape[1]
        enc_in = f_std.reshape(n, p * d)
        targets = f_std.reshape(n * p, d)
        arrays = []
        for w, b in zip(decoder.weights, decoder.biases):
            arrays.extend([w, b])
        arrays.extend(encoder.param_arrays())

        history = []
        aborted = False
        checkpoint = [a.copy() for a in arrays]
        batch = max(1, min(self.batch_size, n))
        r_dim = self.latent_dim
        dec_in = np.empty((batch * p, m + r_dim))
        dec_in[:, :m] = np.tile(coords_std, (batch, 1))
        state = AdamState.for_params(arrays, lr=self.base_lr)
        for stage, mult in enumerate(self.lr_schedule):
            state.lr = mult * self.base_lr
            stage_losses = []
            t0 = time.time()
            for epoch in range(self.epochs_per_stage):
                order = rng.permutation(n)
                total, count = 0.0, 0
                for lo in range(0, n, batch):
                    idx = order[lo : lo + batch]
                    b = len(idx)
                    bp = b * p
                    q, enc_cache = encoder_forward(encoder, enc_in[idx], cache=True)
                    dec_in[:bp, m:].reshape(b, p, r_dim)[:] = q[:, None, :]
                    out, dec_cache = mlp_forward_cached(decoder, dec_in[:bp])
                    diff = out
                    diff -= targets[(idx[:, None] * p + np.arange(p)).ravel()]
                    loss = float(np.mean(diff * diff))
                    total += loss * b
                    count += b
                    diff *= 2.0 / diff.size
                    gw, gb, gin = backprop_from_cache(decoder, dec_cache, diff)
                    dq = gin[:, m:].reshape(b, p, -1).sum(axis=1)
                    enc_grads = encoder_backprop(encoder, enc_cache, dq)
                    grads = []
                    for w_g, b_g in zip(gw, gb):
                        grads.extend([w_g, b_g])
                    grads.extend(enc_grads)
                    adam_step(state, arrays, grads)
                epoch_loss = total / count
                if not np.isfinite(epoch_loss):
                    warnings.warn(
                        f"training loss became non-finite in stage {stage}; "
                        "restoring last good checkpoint"
                    )
                    for a, c in zip(arrays, checkpoint):
                        a[...] = c
                    aborted = True
                    break
                checkpoint = [a.copy() for a in arrays]
                stage_losses.append(epoch_loss)
                # plateau detection on moving averages so minibatch noise
                # cannot trigger a premature stop
                win = max(1, self.plateau_patience // 4)
                if (
                    not self.paper_faithful
                    and len(stage_losses) >= self.plateau_patience + win
                ):
                    past = np.mean(stage_losses[-self.plateau_patience - win:
                                                -self.plateau_patience])
                    now = np.mean(stage_losses[-win:])
                    if past - now < self.plateau_tol * past:
                        break
            history.append(
                {
                    "stage": stage,
                    "lr": mult * self.base_lr,
                    "epochs": len(stage_losses),
                    "losses": stage_losses,
                    "seconds": time.time() - t0,
                }
            )
            if self.verbose and stage_losses:
                print(
                    f"[stage {stage}] lr={mult * self.base_lr:.2e} "
                    f"epochs={len(stage_losses)} loss={stage_losses[-1]:.3e}"
                )
            if aborted:
                break
        return history, aborted

    # -- inference ---------------------------------------------------------

    def transform(self, X):
        """Encode raw snapshots to latent vectors, shape (n, latent_dim)."""
        check_is_fitted(self, "decoder_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise DiscretizationMismatchError(
                f"snapshots have {X.shape[1]} values; the encoder was trained "
                f"on {self.n_features_in_}"
            )
        f_std = self.stats_.apply_fields(
            X.reshape(X.shape[0], self.n_points_, self.d_)
        )
        return encoder_forward(self.encoder_, f_std.reshape(X.shape[0], -1))

    def inverse_transform(self, Q, coords=None):
        """Decode latent vectors to raw fields at ``coords`` (training grid
        by default); returns (n, len(coords)*d)."""
        check_is_fitted(self, "decoder_")
        Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
        pts = self.coords_ if coords is None else np.asarray(coords, dtype=np.float64)
        coords_std = self.stats_.apply_coords(np.atleast_2d(pts))
        f_std = self._decode_std_joint(coords_std, Q)
        return self.stats_.invert_fields(
            f_std.reshape(Q.shape[0], coords_std.shape[0], self.d_)
        ).reshape(Q.shape[0], -1)

    def decode(self, coords, q):
        """g(x, q) in raw units for one latent vector; coords is (k, m)."""
        check_is_fitted(self, "decoder_")
        f_std = mlp_forward(self.decoder_, self._decoder_input(coords, q))
        return self.stats_.invert_fields(f_std)

    def decode_with_latent_jacobian(self, coords, q):
        """Raw field values and d(field)/d(q), shapes (k, d) and (k, d, r)."""
        check_is_fitted(self, "decoder_")
        cols = np.arange(self.m_, self.m_ + self.latent_dim)
        val, jac = mlp_forward_with_jacobian(
            self.decoder_, self._decoder_input(coords, q), input_cols=cols
        )
        return self.stats_.invert_fields(val), jac * self.stats_.field_std[None, :, None]

    def decode_with_spatial_jacobian(self, coords, q):
        """Raw field values and d(field)/d(x), shapes (k, d) and (k, d, m)."""
        check_is_fitted(self, "decoder_")
        cols = np.arange(self.m_)
        val, jac = mlp_forward_with_jacobian(
            self.decoder_, self._decoder_input(coords, q), input_cols=cols
        )
        jac = jac * self.stats_.field_std[None, :, None] / self.stats_.coord_scale[None, None, :]
        return self.stats_.invert_fields(val), jac

    def _decoder_input(self, coords, q):
        coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
        x_std = self.stats_.apply_coords(coords)
        q = np.asarray(q, dtype=np.float64).reshape(-1)
        if q.shape[0] != self.latent_dim:
            raise ValidationError(
                f"latent vector has length {q.shape[0]}, expected {self.latent_dim}"
            )
        return np.concatenate(
            [x_std, np.broadcast_to(q, (x_std.shape[0], q.shape[0]))], axis=1
        )

    def _decode_std_batch(self, Q):
        """Standardized-unit reconstructions on the training grid."""
        coords_std = self.stats_.apply_coords(self.coords_)
        return self._decode_std_joint(coords_std, np.atleast_2d(Q))

    def _decode_std_joint(self, coords_std, Q, chunk_rows: int = 1 << 18):
        """Decode every (coordinate, latent) pair, chunked to bound memory;
        returns (n_latents * n_points, d) reshaped to (n_latents, n_points*d)."""
        p = coords_std.shape[0]
        n = Q.shape[0]
        per = max(1, chunk_rows // max(p, 1))
        outs = []
        for lo in range(0, n, per):
            qs = Q[lo : lo + per]
            dec_in = np.concatenate(
                [np.tile(coords_std, (qs.shape[0], 1)), np.repeat(qs, p, axis=0)],
                axis=1,
            )
            outs.append(mlp_forward(self.decoder_, dec_in))
        flat = np.concatenate(outs, axis=0)
        return flat.reshape(n, p * self.d_)

    def parameter_count(self) -> int:
        """Decoder parameter count; a function of (m, r, d, beta) only."""
        check_is_fitted(self, "decoder_")
        return self.decoder_.param_count()


def reconstruction_report(embedding: NeuralFieldEmbedding, dataset) -> dict:
    """Reconstruction quality of a fitted embedding on a raw dataset.

    Returns overall MSE, per-snapshot relative L2 grouped by trajectory, and
    PSNR against the ground-truth dynamic range.
    """
    X = dataset.snapshot_matrix()
    recon = embedding.inverse_transform(embedding.transform(X))
    rel = np.array(
        [metrics.relative_l2(recon[i], X[i]) for i in range(X.shape[0])]
    ).reshape(dataset.n_params, -1)
    return {
        "mse": metrics.mse(recon, X),
        "psnr": metrics.psnr(recon, X),
        "relative_l2": rel,
        "relative_l2_mean": float(np.mean(rel)),
        "relative_l2_max": float(np.max(rel)),
    }
