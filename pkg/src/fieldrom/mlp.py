"""Small dense MLPs with hand-written derivatives.

Everything downstream (the field decoder, the snapshot encoder, the latent
least-squares solvers) runs on the primitives in this module: a float64
forward pass, an exact input-jacobian accumulated layer by layer in the same
sweep as the values, reverse-mode parameter gradients, and Adam.  Only the
fixed feed-forward topology is differentiated; there is no general autodiff.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError

ELU_ALPHA = 1.0  # standard ELU default; unbounded linear branch for x >= 0
SIREN_OMEGA0 = 30.0


# ---------------------------------------------------------------------------
# Activations
# ---------------------------------------------------------------------------

def elu(z):
    return elu_inplace(np.array(z, copy=True))


def elu_inplace(z):
    # vectorized expm1 over the whole block then a masked copy beats fancy
    # indexing by a wide margin; this is the training hot loop.  expm1 may
    # overflow on large positive entries; those lanes are never copied.
    with np.errstate(over="ignore"):
        e = np.expm1(z)
    if ELU_ALPHA != 1.0:
        e *= ELU_ALPHA
    np.copyto(z, e, where=z < 0.0)
    return z


def elu_prime(z):
    out = np.ones_like(z)
    neg = z < 0.0
    if neg.any():
        out[neg] = ELU_ALPHA * np.exp(z[neg])
    return out


def elu_prime_from_output(activated):
    """ELU derivative recovered from the activation itself: elu'(z) is
    elu(z) + alpha below zero and 1 above, and since alpha = 1 the two
    branches meet in min(elu(z) + alpha, 1).  No exp needed."""
    deriv = activated + ELU_ALPHA
    np.minimum(deriv, 1.0, out=deriv)
    return deriv


_ACTIVATIONS = {
    "elu": (elu, elu_prime),
    "sine": (np.sin, np.cos),
}


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

@dataclass
class Mlp:
    """Fully-connected network: weights[i] is (fan_in, fan_out), row-major.

    ``activation`` is "elu" or "siren".  Hidden layers are activated; the
    output layer is always linear so the network can emit unbounded field
    values.  For "siren" the first pre-activation is scaled by ``omega0``
    before the sine.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "elu"
    omega0: float = SIREN_OMEGA0

    def __post_init__(self):
        if self.activation not in ("elu", "siren"):
            raise ValueError(f"unsupported activation {self.activation!r}")
        if len(self.weights) != len(self.biases):
            raise ValueError("weights/biases length mismatch")
        for i in range(len(self.weights) - 1):
            if self.weights[i].shape[1] != self.weights[i + 1].shape[0]:
                raise ValueError(
                    f"layer {i} out dim {self.weights[i].shape[1]} does not chain "
                    f"into layer {i + 1} in dim {self.weights[i + 1].shape[0]}"
                )
        for w, b in zip(self.weights, self.biases):
            if b.shape != (w.shape[1],):
                raise ValueError("bias shape does not match weight columns")

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def param_count(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "Mlp":
        return Mlp(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
            self.omega0,
        )

    def _act_pair(self, layer: int):
        """(activation, derivative) applied after layer ``layer``; None for the output layer."""
        if layer == self.n_layers - 1:
            return None
        if self.activation == "elu":
            return _ACTIVATIONS["elu"]
        return _ACTIVATIONS["sine"]

    def _pre_scale(self, layer: int) -> float:
        """Scalar multiplier on the pre-activation (SIREN first layer only)."""
        if self.activation == "siren" and layer == 0 and self.n_layers > 1:
            return self.omega0
        return 1.0


def init_mlp(dims, activation="elu", omega0=SIREN_OMEGA0, seed=0) -> Mlp:
    """Seeded initialization.

    ELU layers use uniform Xavier.  SIREN uses the scheme from the sinusoidal
    representation literature: first layer U(-1/n, 1/n) (scaled by omega0 in
    the forward pass), remaining layers U(-sqrt(6/n), sqrt(6/n)).
    """
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    n = len(dims) - 1
    for i in range(n):
        fan_in, fan_out = dims[i], dims[i + 1]
        if activation == "elu":
            bound = np.sqrt(6.0 / (fan_in + fan_out))
        elif activation == "siren":
            bound = 1.0 / fan_in if i == 0 else np.sqrt(6.0 / fan_in)
        else:
            raise ValueError(f"unsupported activation {activation!r}")
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Mlp(weights, biases, activation, omega0)


def decoder_dims(m: int, r: int, d: int, beta: int) -> list[int]:
    """Layer widths of a field decoder: (m + r) inputs, 5 hidden layers of
    width beta*d, d outputs.  Independent of the grid resolution by design."""
    return [m + r] + [beta * d] * 5 + [d]


# ---------------------------------------------------------------------------
# Forward / jacobian / backprop
# ---------------------------------------------------------------------------

def mlp_forward(params: Mlp, x: np.ndarray) -> np.ndarray:
    """Evaluate the network.  Accepts a single vector or an (n, in_dim) batch."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    a = np.atleast_2d(x)
    if a.shape[1] != params.in_dim:
        raise ValueError(
            f"input has trailing dim {a.shape[1]}, network expects {params.in_dim}"
        )
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w
        z += b
        s = params._pre_scale(i)
        if s != 1.0:
            z *= s
        pair = params._act_pair(i)
        if pair is None:
            a = z
        elif params.activation == "elu":
            a = elu_inplace(z)
        else:
            a = pair[0](z)
    return a[0] if single else a


def mlp_forward_with_jacobian(params: Mlp, x: np.ndarray, input_cols=None):
    """Value and exact input-jacobian in one sweep.

    The jacobian of the composition is accumulated alongside the values: after
    each layer the running matrix is multiplied by that layer's local
    derivative.  The value arithmetic is the same expression sequence as
    :func:`mlp_forward`, so the two agree bit-for-bit.

    ``input_cols`` restricts the seeded identity to a subset of input columns
    (used to get d(output)/d(latent) without the spatial columns).

    Returns ``(value, jac)`` with jac shaped (out_dim, k) for a single input
    or (n, out_dim, k) for a batch, where k = len(input_cols) or in_dim.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    a = np.atleast_2d(x)
    if a.shape[1] != params.in_dim:
        raise ValueError(
            f"input has trailing dim {a.shape[1]}, network expects {params.in_dim}"
        )
    n = a.shape[0]
    if input_cols is None:
        seed = np.eye(params.in_dim)
    else:
        input_cols = np.asarray(input_cols, dtype=np.intp)
        seed = np.zeros((params.in_dim, len(input_cols)))
        seed[input_cols, np.arange(len(input_cols))] = 1.0
    jac = np.broadcast_to(seed, (n,) + seed.shape).copy()  # (n, in_dim, k)

    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w
        z += b
        s = params._pre_scale(i)
        if s != 1.0:
            z *= s
        # d(z)/d(prev) = s * w^T, applied row-wise to the running jacobian
        jac = np.matmul(w.T, jac)
        if s != 1.0:
            jac *= s
        pair = params._act_pair(i)
        if pair is None:
            a = z
        elif params.activation == "elu":
            a = elu_inplace(z)
            jac *= elu_prime_from_output(a)[:, :, None]
        else:
            a = pair[0](z)
            jac *= pair[1](z)[:, :, None]
    if single:
        return a[0], jac[0]
    return a, jac


def mlp_forward_cached(params: Mlp, x: np.ndarray):
    """Forward pass keeping what backprop needs per layer.

    For ELU the derivative is recoverable from the activation itself, so
    only post-activations are cached; sine layers keep their pre-activation
    for the cosine.
    """
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != params.in_dim:
        raise ValueError("cached forward expects an (n, in_dim) batch")
    pre, post = [], [a]
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = post[-1] @ w
        z += b
        s = params._pre_scale(i)
        if s != 1.0:
            z *= s
        pair = params._act_pair(i)
        if pair is None:
            pre.append(None)
            post.append(z)
        elif params.activation == "elu":
            pre.append(None)
            post.append(elu_inplace(z))
        else:
            pre.append(z)
            post.append(pair[0](z))
    return post[-1], (pre, post)


def mlp_backprop(params: Mlp, x: np.ndarray, upstream: np.ndarray):
    """Parameter gradients of a batch-summed loss.

    ``upstream`` is d(loss)/d(output) per row, shaped (n, out_dim).  Returns
    ``(grad_w, grad_b, grad_input)``; parameter gradients are summed over the
    batch, ``grad_input`` is per-row.
    """
    _, cache = mlp_forward_cached(params, np.atleast_2d(np.asarray(x, dtype=np.float64)))
    return backprop_from_cache(params, cache, upstream)


def backprop_from_cache(params: Mlp, cache, upstream: np.ndarray):
    """Reverse sweep reusing the cache of :func:`mlp_forward_cached`."""
    pre, post = cache
    delta = np.asarray(upstream, dtype=np.float64)
    if delta.shape != (post[0].shape[0], params.out_dim):
        raise ValueError(
            f"upstream gradient shape {delta.shape} does not match "
            f"(batch, out_dim)=({post[0].shape[0]}, {params.out_dim})"
        )
    grad_w = [None] * params.n_layers
    grad_b = [None] * params.n_layers
    own = False  # whether delta is a private buffer we may mutate
    for i in range(params.n_layers - 1, -1, -1):
        pair = params._act_pair(i)
        if pair is not None:
            deriv = (
                elu_prime_from_output(post[i + 1])
                if params.activation == "elu"
                else pair[1](pre[i])
            )
            if own:
                delta *= deriv
            else:
                delta = delta * deriv
                own = True
        s = params._pre_scale(i)
        if s != 1.0:
            if own:
                delta *= s
            else:
                delta = delta * s
                own = True
        grad_w[i] = post[i].T @ delta
        grad_b[i] = delta.sum(axis=0)
        delta = delta @ params.weights[i].T
        own = True
    return grad_w, grad_b, delta


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    """Moment accumulators shaped like one flat list of parameter arrays."""

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, arrays, lr=1e-4) -> "AdamState":
        return cls(
            lr=lr,
            m=[np.zeros_like(a) for a in arrays],
            v=[np.zeros_like(a) for a in arrays],
        )


def adam_step(state: AdamState, arrays, grads):
    """One bias-corrected Adam update, mutating ``arrays`` and ``state``."""
    if len(arrays) != len(state.m) or len(arrays) != len(grads):
        raise ValueError("parameter/gradient/accumulator length mismatch")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise DivergenceError("non-finite gradient in Adam step", step=state.step)
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    alpha = state.lr * np.sqrt(c2) / c1
    for a, g, m, v in zip(arrays, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        a -= alpha * m / (np.sqrt(v) + state.eps * np.sqrt(c2))
    return arrays, state


def finite_difference_jacobian(fun, x, h=1e-6):
    """Central-difference jacobian of a vector function, the reference oracle
    the analytic jacobian is tested against."""
    x = np.asarray(x, dtype=np.float64)
    f0 = np.asarray(fun(x))
    jac = np.empty((f0.size, x.size))
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        jac[:, j] = (np.asarray(fun(x + e)) - np.asarray(fun(x - e))) / (2.0 * h)
    return jac
