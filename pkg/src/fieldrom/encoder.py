"""Snapshot encoder: strided 1D convolutions followed by a small dense head.

The encoder maps one full discretized snapshot (length P, d channels) to the
latent vector q.  It is the only discretization-bound network in the package;
it is used during training and to produce initial latent states, never inside
the reduced time loop.

Conv layers use kernel 6, stride 4, d output channels, ELU activation and no
padding.  Layers are stacked while the per-channel length stays at or above
ceil(32/d); the result is the admissible length closest to 32/d.  The conv
output is flattened to one channel and passed through a dense layer to 32 and
a final linear layer to r.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DiscretizationMismatchError
from .mlp import Mlp, backprop_from_cache, elu, elu_prime, init_mlp, mlp_forward, mlp_forward_cached

CONV_KERNEL = 6
CONV_STRIDE = 4
HEAD_WIDTH = 32


def conv_stage_lengths(p: int, d: int) -> list[int]:
    """Per-channel lengths after each conv layer, starting at the input length.

    Total for every p >= 1: when even one conv would undershoot ceil(32/d),
    the stage is empty and the head consumes the raw snapshot.
    """
    target = math.ceil(HEAD_WIDTH / d)
    lengths = [p]
    while True:
        nxt = (lengths[-1] - CONV_KERNEL) // CONV_STRIDE + 1
        if nxt < target:
            break
        lengths.append(nxt)
    return lengths


@dataclass
class ConvEncoder:
    """Parameters of the snapshot encoder.

    conv_weights[i] has shape (kernel, c_in, c_out); conv_biases[i] is (c_out,).
    ``head`` is the dense tail operating on the flattened conv output.
    """

    p: int
    d: int
    conv_weights: list[np.ndarray]
    conv_biases: list[np.ndarray]
    head: Mlp

    @property
    def latent_dim(self) -> int:
        return self.head.out_dim

    def param_count(self) -> int:
        n = sum(w.size + b.size for w, b in zip(self.conv_weights, self.conv_biases))
        return n + self.head.param_count()

    def copy(self) -> "ConvEncoder":
        return ConvEncoder(
            self.p,
            self.d,
            [w.copy() for w in self.conv_weights],
            [b.copy() for b in self.conv_biases],
            self.head.copy(),
        )

    def param_arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.conv_weights, self.conv_biases):
            out.extend([w, b])
        for w, b in zip(self.head.weights, self.head.biases):
            out.extend([w, b])
        return out


def init_encoder(p: int, d: int, r: int, seed: int = 0) -> ConvEncoder:
    rng = np.random.default_rng(seed)
    lengths = conv_stage_lengths(p, d)
    conv_w, conv_b = [], []
    for _ in range(len(lengths) - 1):
        fan_in = CONV_KERNEL * d
        bound = np.sqrt(6.0 / (fan_in + d))
        conv_w.append(rng.uniform(-bound, bound, size=(CONV_KERNEL, d, d)))
        conv_b.append(np.zeros(d))
    flat = lengths[-1] * d
    head = init_mlp([flat, HEAD_WIDTH, r], activation="elu",
                    seed=int(rng.integers(0, 2**31 - 1)))
    return ConvEncoder(p, d, conv_w, conv_b, head)


def _im2col(x: np.ndarray) -> np.ndarray:
    """(n, L, c) -> (n, L_out, kernel*c) windows for kernel 6 / stride 4."""
    n, length, c = x.shape
    l_out = (length - CONV_KERNEL) // CONV_STRIDE + 1
    s0, s1, s2 = x.strides
    windows = np.lib.stride_tricks.as_strided(
        x,
        shape=(n, l_out, CONV_KERNEL, c),
        strides=(s0, CONV_STRIDE * s1, s1, s2),
        writeable=False,
    )
    return windows.reshape(n, l_out, CONV_KERNEL * c)


def encoder_forward(enc: ConvEncoder, snapshots: np.ndarray, cache: bool = False):
    """Encode a batch of flattened snapshots, shape (n, P*d) or (n, P, d)."""
    x = np.asarray(snapshots, dtype=np.float64)
    if x.ndim == 2 and x.shape[1] == enc.p * enc.d:
        x = x.reshape(x.shape[0], enc.p, enc.d)
    if x.ndim != 3 or x.shape[1] != enc.p or x.shape[2] != enc.d:
        raise DiscretizationMismatchError(
            f"snapshot shape {np.asarray(snapshots).shape} does not match the "
            f"encoder discretization (P={enc.p}, d={enc.d})"
        )
    caches = []
    for w, b in zip(enc.conv_weights, enc.conv_biases):
        col = _im2col(x)  # (n, L_out, kernel*c)
        z = col @ w.reshape(-1, w.shape[2]) + b
        if cache:
            caches.append((x.shape, col, z))
        x = elu(z)
    flat = np.ascontiguousarray(x).reshape(x.shape[0], -1)
    if cache:
        q, head_cache = mlp_forward_cached(enc.head, flat)
        return q, (caches, x.shape, head_cache)
    return mlp_forward(enc.head, flat)


def encoder_backprop(enc: ConvEncoder, cache, upstream: np.ndarray):
    """Gradients of a batch-summed loss w.r.t. every encoder parameter.

    Returns a flat list matching :meth:`ConvEncoder.param_arrays` order.
    """
    conv_caches, conv_out_shape, head_cache = cache
    head_gw, head_gb, delta_flat = backprop_from_cache(enc.head, head_cache, upstream)
    delta = delta_flat.reshape(conv_out_shape)  # (n, L, c)
    conv_grads = []
    for (in_shape, col, z), w in zip(reversed(conv_caches), reversed(enc.conv_weights)):
        delta = delta * elu_prime(z)
        wcol = w.reshape(-1, w.shape[2])  # (kernel*c_in, c_out)
        gw = np.tensordot(col, delta, axes=([0, 1], [0, 1])).reshape(w.shape)
        gb = delta.sum(axis=(0, 1))
        dcol = delta @ wcol.T  # (n, L_out, kernel*c_in)
        dx = np.zeros(in_shape)
        n, l_out = delta.shape[0], delta.shape[1]
        c_in = in_shape[2]
        dcol = dcol.reshape(n, l_out, CONV_KERNEL, c_in)
        # stride (4) < kernel (6): scatter one kernel offset at a time; the
        # windows touched by a fixed offset are disjoint, so plain slice-adds
        # are safe.
        for k in range(CONV_KERNEL):
            dx[:, k : k + CONV_STRIDE * l_out : CONV_STRIDE, :] += dcol[:, :, k, :]
        conv_grads.append((gw, gb))
        delta = dx
    grads = []
    for gw, gb in reversed(conv_grads):
        grads.extend([gw, gb])
    for gw, gb in zip(head_gw, head_gb):
        grads.extend([gw, gb])
    return grads
