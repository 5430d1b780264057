"""Latent dynamics: evolve q by inference, exact PDE update, and inversion.

One reduced step has three phases.  (1) Decode the field (and any stencil
neighbors or gradients the PDE needs) at the integration samples; (2) apply
the full-order explicit update *at those samples only*, calling the very same
pointwise kernels as :mod:`fieldrom.pde` - the update of the reconstruction
restricted to the full grid is bit-identical to the full-order stepper; (3)
project the evolved sample values back to a latent vector by nonlinear (or
linearized) least squares.

Both the neural embedding and the POD baseline drive this machinery through a
tiny grid-evaluation interface, so the two ROMs share the entire stepping
path and differ only in the decoder.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import pde as pdemod
from .errors import DivergenceError, InversionError, ValidationError

ROM_DIVERGENCE_LIMIT = 1e10


def check_well_posed(n_samples: int, d: int, r: int) -> None:
    """Least-squares inversion needs at least r scalar equations."""
    if n_samples * d < r:
        raise ValidationError(
            f"ill-posed inversion: |M|*d = {n_samples * d} < r = {r}; "
            f"need at least ceil(r/d) = {-(-r // d)} samples"
        )


# ---------------------------------------------------------------------------
# State and sample containers
# ---------------------------------------------------------------------------

@dataclass
class LatentState:
    """Latent vector plus the previous step needed for finite-difference
    rates; q_dot is zero at the initial step by convention."""

    q: np.ndarray
    q_prev: np.ndarray | None = None
    n: int = 0

    def q_dot(self, dt: float) -> np.ndarray:
        if self.q_prev is None or dt == 0.0:
            return np.zeros_like(self.q)
        return (self.q - self.q_prev) / dt


@dataclass(frozen=True)
class SampleSet:
    """Integration-sample indices into the full-order grid, with cached
    coordinates."""

    indices: np.ndarray
    coords: np.ndarray

    def __len__(self) -> int:
        return len(self.indices)

    @classmethod
    def from_indices(cls, indices, grid_coords) -> "SampleSet":
        idx = np.asarray(indices, dtype=np.int64).reshape(-1)
        grid_coords = np.asarray(grid_coords, dtype=np.float64)
        if len(np.unique(idx)) != len(idx):
            raise ValidationError("sample indices must be unique")
        if idx.size and (idx.min() < 0 or idx.max() >= grid_coords.shape[0]):
            raise ValidationError("sample index out of grid range")
        return cls(indices=idx, coords=grid_coords[idx])

    def union(self, new_index: int, grid_coords) -> "SampleSet":
        return SampleSet.from_indices(
            np.concatenate([self.indices, [new_index]]), grid_coords
        )


@dataclass
class InversionConfig:
    mode: str = "gauss_newton"  # or "linearized"
    max_iter: int = 10
    tol: float = 1e-10  # stop when the squared residual decrease falls below
    backtrack_factor: float = 0.5
    min_step: float = 1e-6
    lam_reg: float = 0.0  # escalated automatically when J^T J is singular


# ---------------------------------------------------------------------------
# Grid-evaluation adapters
# ---------------------------------------------------------------------------

class NeuralGridField:
    """Evaluate a fitted :class:`NeuralFieldEmbedding` at grid nodes by index."""

    def __init__(self, embedding, coords=None):
        self.embedding = embedding
        self.coords = (
            embedding.coords_ if coords is None else np.asarray(coords, dtype=np.float64)
        )
        self.latent_dim = embedding.latent_dim
        self.d = embedding.d_
        self.m = self.coords.shape[1]
        self.n_points = self.coords.shape[0]

    def values(self, idx, q):
        return self.embedding.decode(self.coords[idx], q)

    def values_jac_q(self, idx, q):
        return self.embedding.decode_with_latent_jacobian(self.coords[idx], q)

    def spatial_grad(self, idx, q):
        return self.embedding.decode_with_spatial_jacobian(self.coords[idx], q)

    def reconstruct(self, q):
        return self.embedding.decode(self.coords, q)


class LinearGridField:
    """POD basis exposed through the same surface (the linear decoder)."""

    def __init__(self, pod, d: int = 1, coords=None):
        p = pod.n_features_in_ // d
        self.pod = pod
        self.d = d
        self.n_points = p
        self.latent_dim = pod.latent_dim
        self.coords = None if coords is None else np.asarray(coords, dtype=np.float64)
        self.m = None if self.coords is None else self.coords.shape[1]
        self._mean = pod.mean_.reshape(p, d)
        self._basis = pod.components_.reshape(p, d, pod.latent_dim)

    def values(self, idx, q):
        return self._mean[idx] + self._basis[idx] @ np.asarray(q, dtype=np.float64)

    def values_jac_q(self, idx, q):
        return self.values(idx, q), self._basis[idx].copy()

    def spatial_grad(self, idx, q):
        raise NotImplementedError(
            "a linear grid basis has no continuous spatial derivative; "
            "use the stencil gradient mode"
        )

    def reconstruct(self, q):
        return self._mean + self._basis @ np.asarray(q, dtype=np.float64)


def encode_initial(embedding, snapshot) -> LatentState:
    """Latent state for a raw initial snapshot on the training discretization."""
    snapshot = np.asarray(snapshot, dtype=np.float64).reshape(1, -1)
    q0 = embedding.transform(snapshot)[0]
    return LatentState(q=q0, q_prev=None, n=0)


# ---------------------------------------------------------------------------
# Inversion solvers
# ---------------------------------------------------------------------------

def _normal_solve(jtj, rhs, lam_reg, r):
    """Solve (J^T J + lam I) x = rhs, escalating lam when singular."""
    lam = lam_reg
    flagged = False
    if lam > 0.0:
        jtj = jtj + lam * np.eye(r)
    try:
        np.linalg.cholesky(jtj)
        x = np.linalg.solve(jtj, rhs)
        if np.all(np.isfinite(x)):
            return x, lam, flagged
    except np.linalg.LinAlgError:
        pass
    lam = max(lam_reg, 1e-10 * np.trace(jtj) / r, 1e-30)
    flagged = True
    x = np.linalg.solve(jtj + lam * np.eye(r), rhs)
    return x, lam, flagged


def invert_gauss_newton(field, indices, targets, q_init, config: InversionConfig):
    """Find q minimizing sum over samples of |g(y, q) - target|^2.

    Returns ``(q, diag)``; ``diag`` records accepted squared residuals (a
    nonincreasing sequence by the backtracking acceptance rule), iteration
    count and flags.
    """
    q = np.array(q_init, dtype=np.float64)
    r = q.shape[0]
    targets = np.asarray(targets, dtype=np.float64)
    diag = {
        "iterations": 0,
        "residual_sq": [],
        "regularized": False,
        "line_search_exhausted": False,
    }
    val = field.values(indices, q)
    res = (val - targets).ravel()
    ss = float(res @ res)
    diag["residual_sq"].append(ss)
    if ss == 0.0:
        diag["residual_final"] = ss
        return q, diag
    # a step that shrinks the squared residual below tol * initial counts as
    # converged (a linear decoder lands there in exactly one iteration)
    ss_floor = config.tol * ss
    for _ in range(config.max_iter):
        val, jac = field.values_jac_q(indices, q)
        res = ((val - targets).ravel())
        jmat = jac.reshape(res.size, r)
        rhs = -(jmat.T @ res)
        dq, _, flagged = _normal_solve(jmat.T @ jmat, rhs, config.lam_reg, r)
        diag["regularized"] = diag["regularized"] or flagged
        alpha = 1.0
        while True:
            q_try = q + alpha * dq
            res_try = (field.values(indices, q_try) - targets).ravel()
            ss_try = float(res_try @ res_try)
            if np.isfinite(ss_try) and ss_try <= ss:
                break
            alpha *= config.backtrack_factor
            if alpha < config.min_step:
                diag["line_search_exhausted"] = True
                diag["residual_final"] = ss
                return q, diag
        improvement = ss - ss_try
        q = q_try
        ss = ss_try
        diag["iterations"] += 1
        diag["residual_sq"].append(ss)
        if improvement < config.tol or ss <= ss_floor:
            break
    diag["residual_final"] = ss
    return q, diag


def invert_linearized(field, indices, delta_targets, q_n, config: InversionConfig):
    """Closed-form latent increment from the first-order expansion of the
    decoder: dq = (J^T J)^{-1} J^T b with b the stacked field increments."""
    q_n = np.asarray(q_n, dtype=np.float64)
    r = q_n.shape[0]
    b = np.asarray(delta_targets, dtype=np.float64).ravel()
    _, jac = field.values_jac_q(indices, q_n)
    jmat = jac.reshape(b.size, r)
    dq, lam, flagged = _normal_solve(jmat.T @ jmat, jmat.T @ b, config.lam_reg, r)
    lin_res = jmat @ dq - b
    diag = {
        "iterations": 1,
        "regularized": flagged,
        "lam": lam,
        "residual_final": float(lin_res @ lin_res),
    }
    return dq, diag


# ---------------------------------------------------------------------------
# Step 1: network inference at the samples
# ---------------------------------------------------------------------------

@dataclass
class InferredSamples:
    """Full-space information gathered at the integration samples."""

    values: np.ndarray  # (k, d)
    grad_x: np.ndarray | None = None  # (k, d, m), analytic mode only
    laplacian: np.ndarray | None = None  # (k, d), stencil mode, 2nd-order PDEs
    f_dot: np.ndarray | None = None  # (k, d)


def _stencil_triple_1d(field, idx, q, n, periodic):
    """Values at idx-1, idx, idx+1 with periodic wrap or one-sided shift."""
    left = idx - 1
    right = idx + 1
    if periodic:
        left %= n
        right %= n
    else:
        shift = np.zeros_like(idx)
        shift[left < 0] = 1
        shift[right > n - 1] = -1
        if np.any(shift != 0):
            warnings.warn("stencil shifted one-sided at the domain edge")
        left = left + shift
        right = right + shift
        idx = idx + shift
    uniq, inv = np.unique(np.concatenate([left, idx, right]), return_inverse=True)
    vals = field.values(uniq, q)
    k = len(idx)
    return vals[inv[:k]], vals[inv[k : 2 * k]], vals[inv[2 * k :]]


def infer_full_space(field, state: LatentState, samples: SampleSet, spec,
                     gradient_mode: str = "stencil", dt: float | None = None):
    """Gather f, the spatial derivatives the PDE needs, and f-dot at samples.

    ``gradient_mode`` "analytic" takes first derivatives from the decoder
    jacobian; "stencil" evaluates the decoder at neighbor offsets and applies
    the PDE's own finite-difference kernels.  Second derivatives always use
    the stencil (the hybrid numerical-differentiation route).
    """
    dt = spec.dt if dt is None else dt
    idx = samples.indices
    out = InferredSamples(values=None)
    if gradient_mode == "analytic":
        vals, grad = field.spatial_grad(idx, state.q)
        out.values, out.grad_x = vals, grad
    else:
        out.values = field.values(idx, state.q)
    if spec.kind in ("heat1d", "diffuse2d"):
        out.laplacian = _stencil_laplacian(field, idx, state.q, spec)
    qd = state.q_dot(dt)
    if np.any(qd != 0.0):
        _, jac = field.values_jac_q(idx, state.q)
        out.f_dot = jac @ qd
    else:
        out.f_dot = np.zeros_like(out.values)
    return out


def _stencil_laplacian(field, idx, q, spec):
    dx = spec.dx
    if spec.kind == "heat1d":
        u_l, u_c, u_r = _stencil_triple_1d(field, idx, q, spec.n_points, periodic=False)
        return pdemod.second_diff(u_l, u_c, u_r, dx)
    nx = spec.grid[0]
    ny = spec.grid[1]
    iy, ix = idx // nx, idx % nx
    sx = np.where(ix == 0, 1, np.where(ix == nx - 1, -1, 0))
    sy = np.where(iy == 0, 1, np.where(iy == ny - 1, -1, 0))
    if np.any(sx != 0) or np.any(sy != 0):
        warnings.warn("stencil shifted one-sided at the domain edge")
    ix, iy = ix + sx, iy + sy
    flat = iy * nx + ix
    uniq, inv = np.unique(
        np.concatenate([flat, flat - 1, flat + 1, flat - nx, flat + nx]),
        return_inverse=True,
    )
    vals = field.values(uniq, q)
    k = len(idx)
    u_c = vals[inv[:k]]
    u_w = vals[inv[k : 2 * k]]
    u_e = vals[inv[2 * k : 3 * k]]
    u_s = vals[inv[3 * k : 4 * k]]
    u_n = vals[inv[4 * k :]]
    return pdemod.second_diff(u_w, u_c, u_e, dx) + pdemod.second_diff(u_s, u_c, u_n, dx)


# ---------------------------------------------------------------------------
# Step 2: exact PDE update restricted to the samples
# ---------------------------------------------------------------------------

def pde_targets(field, state: LatentState, samples: SampleSet, spec, dt,
                gradient_mode: str = "stencil"):
    """Evolved field values at the samples: the full-order update applied to
    the decoder reconstruction, evaluated sparsely.

    With samples = the whole grid this reproduces the full-order stepper on
    the reconstruction bit for bit (shared kernels, shared boundary
    handling).  Returns ``(targets, t_inference, t_stepping)``.
    """
    idx = samples.indices
    q = state.q
    n = spec.n_points
    t0 = time.perf_counter()
    if spec.kind == "heat1d":
        u_l, u_c, u_r = _gather_triple(field, idx, q, n, periodic=False)
        nu = spec.diffusivity()[idx]
        t1 = time.perf_counter()
        target = pdemod.euler(u_c, pdemod.heat_rate(u_l, u_c, u_r, nu[:, None], spec.dx), dt)
        target[(idx == 0) | (idx == n - 1)] = 0.0
    elif spec.kind == "diffuse2d":
        nx, ny = spec.grid[0], spec.grid[1]
        iy, ix = idx // nx, idx % nx
        uniq, inv = np.unique(
            np.concatenate([idx, idx - 1, idx + 1, idx - nx, idx + nx]) % n,
            return_inverse=True,
        )
        vals = field.values(uniq, q)
        k = len(idx)
        u_c, u_w, u_e = vals[inv[:k]], vals[inv[k : 2 * k]], vals[inv[2 * k : 3 * k]]
        u_s, u_n = vals[inv[3 * k : 4 * k]], vals[inv[4 * k :]]
        nu = spec.diffusivity().reshape(-1)[idx]
        t1 = time.perf_counter()
        target = pdemod.euler(
            u_c, pdemod.diffuse2d_rate(u_c, u_w, u_e, u_s, u_n, nu[:, None], spec.dx), dt
        )
        border = (ix == 0) | (ix == nx - 1) | (iy == 0) | (iy == ny - 1)
        target[border] = 0.0
    elif spec.kind == "advect1d":
        a = spec.params[0]
        if gradient_mode == "analytic":
            u_c, grad = field.spatial_grad(idx, q)
            t1 = time.perf_counter()
            target = pdemod.euler(u_c, -a * grad[:, :, 0], dt)
        else:
            u_l, u_c, u_r = _gather_triple(field, idx, q, n, periodic=True)
            t1 = time.perf_counter()
            target = pdemod.euler(u_c, pdemod.upwind_rate(u_l, u_c, u_r, a, spec.dx), dt)
    elif spec.kind == "burgers1d":
        mu_d = spec.params[0]
        x = spec.coordinates()[:, 0]
        if gradient_mode == "analytic":
            w_c, grad = field.spatial_grad(idx, q)
            t1 = time.perf_counter()
            rate = -w_c * grad[:, :, 0] + pdemod.BURGERS_SOURCE_COEF * np.exp(
                mu_d * x[idx]
            )[:, None]
            target = pdemod.euler(w_c, rate, dt)
            held = idx == 0
            if np.any(held):
                target[held] = w_c[held]
        else:
            target, t1 = _burgers_targets(field, idx, q, spec, dt, x, mu_d)
    else:
        raise ValidationError(f"unknown PDE kind {spec.kind!r}")
    t2 = time.perf_counter()
    return target, (t1 - t0), (t2 - t1)


def _gather_triple(field, idx, q, n, periodic):
    left = (idx - 1) % n if periodic else np.maximum(idx - 1, 0)
    right = (idx + 1) % n if periodic else np.minimum(idx + 1, n - 1)
    uniq, inv = np.unique(np.concatenate([left, idx, right]), return_inverse=True)
    vals = field.values(uniq, q)
    k = len(idx)
    return vals[inv[:k]], vals[inv[k : 2 * k]], vals[inv[2 * k :]]


def _burgers_targets(field, idx, q, spec, dt, x, mu_d):
    """Upwind update at the samples; cell 0 is held, the last cell copies its
    updated left neighbor (zero-Neumann outflow)."""
    n = spec.n_points
    # the last cell's target is the updated value of cell n-2
    eff = np.where(idx == n - 1, n - 2, idx)
    need = np.unique(np.concatenate([eff - 1, eff, eff + 1, [0]]))
    need = need[(need >= 0) & (need < n)]
    vals = field.values(need, q)

    def w_of(arr):
        return vals[np.searchsorted(need, arr)]
    t1 = time.perf_counter()
    interior = eff >= 1
    target = np.empty((len(idx), field.d))
    if np.any(interior):
        c = eff[interior]
        rate = pdemod.burgers_cell_rate(
            w_of(c - 1), w_of(c), w_of(c + 1), x[c][:, None], mu_d, spec.dx
        )
        target[interior] = pdemod.euler(w_of(c), rate, dt)
    held = idx == 0
    if np.any(held):
        target[held] = w_of(np.zeros(int(held.sum()), dtype=np.int64))
    return target, t1


# ---------------------------------------------------------------------------
# Full reduced step and rollout
# ---------------------------------------------------------------------------

@dataclass
class StepDiagnostics:
    iterations: int
    residual: float
    regularized: bool
    t_inference: float
    t_stepping: float
    t_inversion: float
    flags: dict = field(default_factory=dict)


def rom_step(field, state: LatentState, samples: SampleSet, spec,
             inversion: InversionConfig | None = None, dt: float | None = None,
             gradient_mode: str = "stencil"):
    """Advance the latent state by one time step; returns (state, diagnostics)."""
    inversion = inversion or InversionConfig()
    dt = spec.dt if dt is None else dt
    targets, t_inf, t_step = pde_targets(field, state, samples, spec, dt, gradient_mode)
    t0 = time.perf_counter()
    if inversion.mode == "gauss_newton":
        q_next, diag = invert_gauss_newton(field, samples.indices, targets, state.q, inversion)
    elif inversion.mode == "linearized":
        f_now = field.values(samples.indices, state.q)
        dq, diag = invert_linearized(field, samples.indices, targets - f_now, state.q, inversion)
        q_next = state.q + dq
    else:
        raise ValidationError(f"unknown inversion mode {inversion.mode!r}")
    t_inv = time.perf_counter() - t0
    if not np.all(np.isfinite(q_next)):
        raise InversionError("inversion produced a non-finite latent vector", diag)
    diags = StepDiagnostics(
        iterations=diag["iterations"],
        residual=diag["residual_final"],
        regularized=diag.get("regularized", False),
        t_inference=t_inf,
        t_stepping=t_step,
        t_inversion=t_inv,
        flags={k: v for k, v in diag.items() if k.endswith("exhausted") and v},
    )
    return LatentState(q=q_next, q_prev=state.q.copy(), n=state.n + 1), diags


@dataclass
class RomRun:
    """Rollout record: latent trajectory, full-grid reconstructions (when
    requested) and per-step diagnostics/timings."""

    latents: np.ndarray  # (steps+1, r)
    reconstruction: np.ndarray | None  # (steps+1, n_points, d)
    diagnostics: list
    timings: dict

    def latent_csv_rows(self, dt: float):
        header = ["n", "t"] + [f"q{i + 1}" for i in range(self.latents.shape[1])] + [
            "gn_iterations",
            "residual",
        ]
        rows = [header]
        for n, q in enumerate(self.latents):
            it = self.diagnostics[n - 1].iterations if n > 0 else 0
            res = self.diagnostics[n - 1].residual if n > 0 else 0.0
            rows.append([n, n * dt] + [f"{v:.17g}" for v in q] + [it, f"{res:.17g}"])
        return rows


def rom_rollout(field, q0, samples: SampleSet, spec, inversion=None, steps=None,
                dt=None, gradient_mode: str = "stencil", record_full: bool = True,
                allow_underdetermined: bool = False,
                divergence_limit: float = ROM_DIVERGENCE_LIMIT) -> RomRun:
    """Run the reduced model for ``steps`` time steps from latent q0.

    Raises :class:`ValidationError` when the sample set violates the
    well-posedness bound (unless explicitly allowed, which the greedy
    selector's bootstrap phase needs) and :class:`DivergenceError` when the
    reconstruction leaves the finite regime.
    """
    inversion = inversion or InversionConfig()
    steps = spec.steps if steps is None else steps
    dt = spec.dt if dt is None else dt
    if not allow_underdetermined:
        check_well_posed(len(samples), field.d, field.latent_dim)
    state = LatentState(q=np.array(q0, dtype=np.float64))
    latents = np.empty((steps + 1, field.latent_dim))
    latents[0] = state.q
    recon = None
    if record_full:
        recon = np.empty((steps + 1, field.n_points, field.d))
        recon[0] = field.reconstruct(state.q)
    diags = []
    for n in range(steps):
        state, diag = rom_step(field, state, samples, spec, inversion, dt, gradient_mode)
        diags.append(diag)
        latents[state.n] = state.q
        if record_full:
            frame = field.reconstruct(state.q)
            recon[state.n] = frame
            bad = not np.all(np.isfinite(frame)) or np.max(np.abs(frame)) > divergence_limit
        else:
            bad = not np.all(np.isfinite(state.q)) or np.max(np.abs(state.q)) > divergence_limit
        if bad:
            raise DivergenceError(
                f"reduced run left the finite regime at step {state.n}", step=state.n
            )
    timings = {
        "inference": sum(d.t_inference for d in diags),
        "stepping": sum(d.t_stepping for d in diags),
        "inversion": sum(d.t_inversion for d in diags),
    }
    return RomRun(latents=latents, reconstruction=recon, diagnostics=diags, timings=timings)


def pod_rom_run(pod, spec, initial_snapshot, steps=None, inversion=None, d: int = 1) -> RomRun:
    """Reduced run on the POD subspace, sharing the stepping path above.

    Runs un-hyper-reduced (every grid point is a sample); the linearized
    inversion is exact for a linear decoder, so each step is reconstruct ->
    full-order update -> orthogonal projection.
    """
    field = LinearGridField(pod, d=d)
    samples = SampleSet.from_indices(
        np.arange(field.n_points), spec.coordinates()
    )
    u0 = np.asarray(initial_snapshot, dtype=np.float64).reshape(1, -1)
    q0 = pod.transform(u0)[0]
    inversion = inversion or InversionConfig(mode="linearized")
    return rom_rollout(field, q0, samples, spec, inversion=inversion, steps=steps)
