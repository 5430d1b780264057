"""Full-order explicit finite-difference solvers.

Four benchmark problems share this module: 1D heat with piecewise-constant
diffusivity, 2D image diffusion, 1D advection, and 1D Burgers with an
exponential source.  The per-point update arithmetic lives in small kernel
functions (``second_diff``, ``heat_rate``, ...) that the reduced-order stepper
calls as well, so a reduced update over the full grid reproduces the
full-order stepper bit for bit.

Stability is the caller's responsibility: there is no internal CFL clamp
(the time-step sweep relies on being able to run unstable configurations).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import DivergenceError, ValidationError

DIVERGENCE_LIMIT = 1e10  # max-norm threshold aborting trajectory generation

PDE_KINDS = ("heat1d", "diffuse2d", "advect1d", "burgers1d")

BURGERS_SOURCE_COEF = 0.02  # amplitude of the exponential source term


# ---------------------------------------------------------------------------
# Pointwise kernels (shared with the reduced-order path)
# ---------------------------------------------------------------------------

def second_diff(u_l, u_c, u_r, dx):
    return (u_l + u_r - 2.0 * u_c) / (dx * dx)


def heat_rate(u_l, u_c, u_r, nu, dx):
    return nu * second_diff(u_l, u_c, u_r, dx)


def diffuse2d_rate(u_c, u_w, u_e, u_s, u_n, nu, dx):
    return nu * (second_diff(u_w, u_c, u_e, dx) + second_diff(u_s, u_c, u_n, dx))


def upwind_rate(u_l, u_c, u_r, a, dx):
    if a >= 0.0:
        return -a * (u_c - u_l) / dx
    return -a * (u_r - u_c) / dx


def burgers_flux(w_l, w_r):
    """Interface flux for f(w) = w^2/2: upwind when the flow is firmly
    rightward, local Lax-Friedrichs otherwise."""
    w_l = np.asarray(w_l, dtype=np.float64)
    w_r = np.asarray(w_r, dtype=np.float64)
    upw = 0.5 * w_l * w_l
    alpha = np.maximum(np.abs(w_l), np.abs(w_r))
    llf = 0.25 * (w_l * w_l + w_r * w_r) - 0.5 * alpha * (w_r - w_l)
    return np.where(np.minimum(w_l, w_r) > 0.0, upw, llf)


def burgers_cell_rate(w_lm1, w_c, w_rp1, x, mu_d, dx, source_coef=BURGERS_SOURCE_COEF):
    f_right = burgers_flux(w_c, w_rp1)
    f_left = burgers_flux(w_lm1, w_c)
    return -(f_right - f_left) / dx + source_coef * np.exp(mu_d * x)


def euler(u, rate, dt):
    return u + dt * rate


# ---------------------------------------------------------------------------
# Problem description
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PdeSpec:
    """Discretized problem definition.

    ``extent`` and ``grid`` are per-axis (1 axis for the 1D problems, 2 for
    image diffusion); ``params`` is the PDE parameter vector mu (region
    diffusivities, advection speed, or the Burgers source exponent).
    """

    kind: str
    extent: tuple
    grid: tuple
    dt: float
    steps: int
    params: tuple = ()

    def validate(self) -> "PdeSpec":
        if self.kind not in PDE_KINDS:
            raise ValidationError(f"unknown PDE kind {self.kind!r}")
        if self.dt <= 0.0:
            raise ValidationError("dt must be positive")
        if self.steps < 0:
            raise ValidationError("steps must be >= 0")
        if any(n < 3 for n in self.grid):
            raise ValidationError("grid must have at least 3 points per axis")
        if self.kind == "diffuse2d":
            if len(self.grid) != 2 or len(self.extent) != 2:
                raise ValidationError("diffuse2d needs a 2-axis grid")
            dx = self.extent[0] / (self.grid[0] - 1)
            dy = self.extent[1] / (self.grid[1] - 1)
            if not np.isclose(dx, dy, rtol=1e-12):
                raise ValidationError("diffuse2d requires square grid spacing")
        elif len(self.grid) != 1 or len(self.extent) != 1:
            raise ValidationError(f"{self.kind} is one-dimensional")
        n_param = {"heat1d": 3, "diffuse2d": 4, "advect1d": 1, "burgers1d": 1}[self.kind]
        if len(self.params) != n_param:
            raise ValidationError(
                f"{self.kind} expects {n_param} parameters, got {len(self.params)}"
            )
        return self

    @property
    def m(self) -> int:
        return len(self.grid)

    @property
    def d(self) -> int:
        return 1

    @property
    def n_points(self) -> int:
        return int(np.prod(self.grid))

    @property
    def dx(self) -> float:
        if self.kind == "advect1d":
            # periodic grid: P cells over the extent, no duplicated endpoint
            return self.extent[0] / self.grid[0]
        return self.extent[0] / (self.grid[0] - 1)

    def coordinates(self) -> np.ndarray:
        """(n_points, m) node coordinates; 2D grids are flattened row-major
        (y outer, x inner)."""
        if self.kind == "advect1d":
            x = np.arange(self.grid[0]) * self.dx
            return x[:, None]
        if self.m == 1:
            return np.linspace(0.0, self.extent[0], self.grid[0])[:, None]
        ny, nx = self.grid[1], self.grid[0]
        x = np.linspace(0.0, self.extent[0], nx)
        y = np.linspace(0.0, self.extent[1], ny)
        yy, xx = np.meshgrid(y, x, indexing="ij")
        return np.column_stack([xx.ravel(), yy.ravel()])

    def diffusivity(self) -> np.ndarray:
        """Pointwise diffusivity field for the diffusion problems."""
        if self.kind == "heat1d":
            return piecewise_regions(np.asarray(self.params), self.grid[0])
        if self.kind == "diffuse2d":
            ny, nx = self.grid[1], self.grid[0]
            row = piecewise_regions(np.asarray(self.params), nx)
            return np.tile(row, (ny, 1))
        raise ValidationError(f"{self.kind} has no diffusivity field")

    def cfl_limit(self, u0=None) -> float:
        """Largest stable explicit time step (von Neumann bound)."""
        if self.kind == "heat1d":
            return 0.5 * self.dx**2 / max(float(np.max(self.params)), 1e-300)
        if self.kind == "diffuse2d":
            return 0.25 * self.dx**2 / max(float(np.max(self.params)), 1e-300)
        if self.kind == "advect1d":
            return self.dx / max(abs(float(self.params[0])), 1e-300)
        if self.kind == "burgers1d":
            wmax = 1.0 if u0 is None else max(float(np.max(np.abs(u0))), 1e-300)
            return self.dx / wmax
        raise ValidationError(f"unknown PDE kind {self.kind!r}")

    def with_params(self, params) -> "PdeSpec":
        return replace(self, params=tuple(float(p) for p in params))

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "extent": list(self.extent),
            "grid": list(self.grid),
            "dt": self.dt,
            "steps": self.steps,
            "params": list(self.params),
        }

    @classmethod
    def from_json_dict(cls, obj) -> "PdeSpec":
        return cls(
            kind=obj["kind"],
            extent=tuple(obj["extent"]),
            grid=tuple(obj["grid"]),
            dt=float(obj["dt"]),
            steps=int(obj["steps"]),
            params=tuple(obj["params"]),
        )


def piecewise_regions(values: np.ndarray, n: int) -> np.ndarray:
    """Equal-width piecewise-constant profile over n grid indices; region
    boundaries snap to cell edges."""
    k = len(values)
    idx = np.minimum((np.arange(n) * k) // n, k - 1)
    return np.asarray(values, dtype=np.float64)[idx]


# ---------------------------------------------------------------------------
# Steppers
# ---------------------------------------------------------------------------

def _require_finite(u):
    if not np.all(np.isfinite(u)):
        raise DivergenceError("non-finite field entering a PDE step")


def heat1d_step(u, nu, dx, dt):
    """Explicit step of u_t = nu(x) u_xx with zero-Dirichlet endpoints."""
    _require_finite(u)
    out = np.empty_like(u)
    out[1:-1] = euler(u[1:-1], heat_rate(u[:-2], u[1:-1], u[2:], nu[1:-1], dx), dt)
    out[0] = 0.0
    out[-1] = 0.0
    return out


def diffuse2d_step(u, nu, dx, dt):
    """Explicit step of u_t = nu(x,y) (u_xx + u_yy) with a zero-Dirichlet border."""
    _require_finite(u)
    out = np.zeros_like(u)
    out[1:-1, 1:-1] = euler(
        u[1:-1, 1:-1],
        diffuse2d_rate(
            u[1:-1, 1:-1],
            u[1:-1, :-2],
            u[1:-1, 2:],
            u[:-2, 1:-1],
            u[2:, 1:-1],
            nu[1:-1, 1:-1],
            dx,
        ),
        dt,
    )
    return out


def advect1d_step(u, a, dx, dt):
    """First-order upwind step of u_t + a u_x = 0 on a periodic grid."""
    _require_finite(u)
    lam = abs(a) * dt / dx
    if lam > 1.0 + 1e-12:
        warnings.warn(f"advection CFL number {lam:.3g} exceeds 1; step is unstable")
    u_l = np.roll(u, 1)
    u_r = np.roll(u, -1)
    return euler(u, upwind_rate(u_l, u, u_r, a, dx), dt)


def burgers1d_step(w, mu_d, dx, dt, x=None, source_coef=BURGERS_SOURCE_COEF):
    """Conservative upwind step of w_t + (w^2/2)_x = c exp(mu_d x).

    The inflow value w[0] is held; the last cell copies its updated neighbor
    (zero-Neumann outflow).  ``x`` defaults to the cell coordinates implied
    by dx.
    """
    _require_finite(w)
    n = w.shape[0]
    if x is None:
        x = np.arange(n) * dx
    rate = burgers_cell_rate(w[:-2], w[1:-1], w[2:], x[1:-1], mu_d, dx, source_coef)
    out = np.empty_like(w)
    out[0] = w[0]
    out[1:-1] = euler(w[1:-1], rate, dt)
    out[-1] = out[-2]
    return out


def step_full(spec: PdeSpec, u: np.ndarray) -> np.ndarray:
    """Advance one snapshot of ``spec`` by one time step."""
    if spec.kind == "heat1d":
        return heat1d_step(u, spec.diffusivity(), spec.dx, spec.dt)
    if spec.kind == "diffuse2d":
        ny, nx = spec.grid[1], spec.grid[0]
        out = diffuse2d_step(u.reshape(ny, nx), spec.diffusivity(), spec.dx, spec.dt)
        return out.reshape(u.shape)
    if spec.kind == "advect1d":
        return advect1d_step(u, spec.params[0], spec.dx, spec.dt)
    if spec.kind == "burgers1d":
        x = spec.coordinates()[:, 0]
        return burgers1d_step(u, spec.params[0], spec.dx, spec.dt, x=x)
    raise ValidationError(f"unknown PDE kind {spec.kind!r}")


def run_full_order(spec: PdeSpec, u0: np.ndarray, steps=None) -> np.ndarray:
    """Roll the full-order model forward; returns (steps+1, n_points)."""
    steps = spec.steps if steps is None else steps
    u = np.asarray(u0, dtype=np.float64).reshape(-1).copy()
    if u.shape[0] != spec.n_points:
        raise ValidationError(
            f"initial condition has {u.shape[0]} values, grid has {spec.n_points}"
        )
    out = np.empty((steps + 1, spec.n_points))
    out[0] = u
    for n in range(steps):
        u = step_full(spec, u)
        if np.max(np.abs(u)) > DIVERGENCE_LIMIT:
            raise DivergenceError(
                f"trajectory exceeded {DIVERGENCE_LIMIT:g} at step {n + 1}", step=n + 1
            )
        out[n + 1] = u
    return out


# ---------------------------------------------------------------------------
# Trajectory datasets
# ---------------------------------------------------------------------------

@dataclass
class TrajectoryDataset:
    """Snapshots of one PDE family over several parameter vectors.

    ``fields`` has shape (n_params, steps+1, n_points, d); every trajectory
    shares ``coords``.  ``stats`` is set once the dataset has been
    standardized (see :mod:`fieldrom.standardize`).
    """

    spec: PdeSpec
    coords: np.ndarray
    params: np.ndarray
    fields: np.ndarray
    stats: object = None

    @property
    def n_params(self) -> int:
        return self.fields.shape[0]

    @property
    def n_snapshots(self) -> int:
        return self.fields.shape[0] * self.fields.shape[1]

    @property
    def n_points(self) -> int:
        return self.fields.shape[2]

    @property
    def d(self) -> int:
        return self.fields.shape[3]

    def snapshot_matrix(self) -> np.ndarray:
        """(n_snapshots, n_points*d) view used by the encoder and POD."""
        n_mu, n_t, p, d = self.fields.shape
        return self.fields.reshape(n_mu * n_t, p * d)


def generate_trajectories(spec: PdeSpec, initial, param_list) -> TrajectoryDataset:
    """Full-order solves for every parameter vector, deterministic order.

    ``initial`` is a single initial snapshot shared by all parameters or a
    callable ``initial(coords, params) -> snapshot``.
    """
    spec.validate()
    coords = spec.coordinates()
    param_arr = np.atleast_2d(np.asarray(param_list, dtype=np.float64))
    trajs = []
    for mu in param_arr:
        sub = spec.with_params(mu)
        u0 = initial(coords, mu) if callable(initial) else np.asarray(initial)
        trajs.append(run_full_order(sub, u0))
    fields = np.stack(trajs)[:, :, :, None]
    return TrajectoryDataset(spec=spec, coords=coords, params=param_arr, fields=fields)


# ---------------------------------------------------------------------------
# Thermodynamic diagnostic
# ---------------------------------------------------------------------------

def heat_energy_budget(trajectory, coords, nu, dt, x1, x2):
    """Escaped/stored/total energy series for a 1D heat trajectory.

    Stored energy is the spatial trapezoid of u over [x1, x2]; escaped energy
    is the time-cumulative trapezoid of the boundary diffusive flux
    nu(x) du/dx (central differences) leaving through x1 and x2; their sum is
    conserved by the continuous model when [x1, x2] lies inside one
    diffusivity region.  x1/x2 snap to grid nodes with a warning.
    """
    traj = np.asarray(trajectory, dtype=np.float64)
    if traj.ndim == 3:
        traj = traj[:, :, 0]
    x = np.asarray(coords).reshape(-1)
    if not x1 < x2:
        raise ValidationError("energy window needs x1 < x2")
    i1 = int(np.argmin(np.abs(x - x1)))
    i2 = int(np.argmin(np.abs(x - x2)))
    if not (np.isclose(x[i1], x1) and np.isclose(x[i2], x2)):
        warnings.warn(
            f"energy window snapped to grid nodes ({x[i1]:.6g}, {x[i2]:.6g})"
        )
    if i1 == 0 or i2 >= x.size - 1 or i1 >= i2:
        raise ValidationError("energy window must lie strictly inside the domain")
    dx = x[1] - x[0]
    dudx_1 = (traj[:, i1 + 1] - traj[:, i1 - 1]) / (2.0 * dx)
    dudx_2 = (traj[:, i2 + 1] - traj[:, i2 - 1]) / (2.0 * dx)
    outflux = nu[i1] * dudx_1 - nu[i2] * dudx_2
    se = np.trapezoid(traj[:, i1 : i2 + 1], dx=dx, axis=1)
    ee = np.concatenate(
        [[0.0], np.cumsum(0.5 * (outflux[1:] + outflux[:-1]) * dt)]
    )
    return ee, se, ee + se


# ---------------------------------------------------------------------------
# Snapshot archives
# ---------------------------------------------------------------------------

def save_archive(directory, dataset: TrajectoryDataset) -> None:
    """Write a dataset as manifest.json + coords.f64 + traj_<k>.f64.

    Blobs are little-endian float64; trajectories are time-major.  The
    round-trip is bit-exact.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format": "fieldrom-archive-v1",
        "byte_order": "little",
        "spec": dataset.spec.to_json_dict(),
        "m": int(dataset.coords.shape[1]),
        "d": int(dataset.d),
        "n_points": int(dataset.n_points),
        "params": [list(map(float, mu)) for mu in dataset.params],
        "stats": dataset.stats.to_json_dict() if dataset.stats is not None else None,
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2))
    with open(directory / "coords.f64", "wb") as fh:
        fh.write(np.ascontiguousarray(dataset.coords, dtype="<f8").tobytes())
    for k in range(dataset.n_params):
        with open(directory / f"traj_{k}.f64", "wb") as fh:
            fh.write(np.ascontiguousarray(dataset.fields[k], dtype="<f8").tobytes())


def load_archive(directory) -> TrajectoryDataset:
    from .standardize import Standardization

    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    spec = PdeSpec.from_json_dict(manifest["spec"])
    m, d, n_points = manifest["m"], manifest["d"], manifest["n_points"]
    coords = np.fromfile(directory / "coords.f64", dtype="<f8").reshape(n_points, m)
    params = np.asarray(manifest["params"], dtype=np.float64).reshape(
        len(manifest["params"]), -1
    )
    n_t = spec.steps + 1
    fields = np.stack(
        [
            np.fromfile(directory / f"traj_{k}.f64", dtype="<f8").reshape(
                n_t, n_points, d
            )
            for k in range(len(manifest["params"]))
        ]
    )
    stats = (
        Standardization.from_json_dict(manifest["stats"])
        if manifest.get("stats")
        else None
    )
    return TrajectoryDataset(
        spec=spec,
        coords=coords.astype(np.float64),
        params=params,
        fields=fields.astype(np.float64),
        stats=stats,
    )
