"""Experiment harness: configs, presets, dataset builders, full pipeline.

A single JSON config describes one experiment end to end: PDE geometry and
parameters, embedding hyperparameters, training schedule, sample selection,
inversion mode, and baselines.  ``run_experiment`` executes
generate -> train -> select -> reduced runs -> evaluation and writes every
artifact (snapshot archives, model files, samples.json, latent.csv, report)
under one output directory.
"""

from __future__ import annotations

import csv
import json
import time
from pathlib import Path

import numpy as np
from jsonschema import Draft202012Validator

from . import metrics
from .analysis import latent_pca, reduction_factors
from .dynamics import (
    InversionConfig,
    NeuralGridField,
    SampleSet,
    check_well_posed,
    pod_rom_run,
    rom_rollout,
)
from .embedding import NeuralFieldEmbedding, reconstruction_report
from .errors import ValidationError
from .modelio import load_encoder, load_mlp, save_encoder, save_mlp
from .pde import (
    PdeSpec,
    TrajectoryDataset,
    generate_trajectories,
    heat_energy_budget,
    save_archive,
)
from .pod import PodEmbedding
from .sampling import GreedyConfig, baseline_samples, greedy_select
from .standardize import Standardization

ENERGY_WINDOW = (0.396, 0.526)  # thermo probe interval, inside the middle region


# ---------------------------------------------------------------------------
# Initial conditions
# ---------------------------------------------------------------------------

def thermo_initial(coords, mu=None, centers=(0.15, 0.35, 0.55, 0.8),
                   amplitudes=(0.8, 1.0, 0.6, 0.9), sigma=0.02):
    """Sum of narrow Gaussian bumps, pinned to zero at the endpoints."""
    x = np.asarray(coords).reshape(-1)
    u = np.zeros_like(x)
    for c, a in zip(centers, amplitudes):
        u += a * np.exp(-((x - c) ** 2) / (2.0 * sigma**2))
    u[0] = 0.0
    u[-1] = 0.0
    return u


def gaussian_profile(coords, center, sigma):
    x = np.asarray(coords).reshape(-1)
    return np.exp(-((x - center) ** 2) / (2.0 * sigma**2))


def advection_initial(coords, mu=None, center=0.25, sigma=0.05):
    return gaussian_profile(coords, center, sigma)


def burgers_initial(coords, mu=None, inflow=4.25, background=1.0):
    w = np.full(np.asarray(coords).shape[0], background)
    w[0] = inflow
    return w


def image_initial(coords, mu=None, shape=None):
    """Synthetic sharp gray-scale test image with a black border.

    Rectangles, a disk and a diagonal ramp give edges in every region so
    blurring is visible; the zero border matches the Dirichlet boundary.
    """
    pts = np.asarray(coords)
    nx = int(np.sqrt(pts.shape[0])) if shape is None else shape[0]
    ny = pts.shape[0] // nx
    x = pts[:, 0].reshape(ny, nx)
    y = pts[:, 1].reshape(ny, nx)
    lx, ly = x.max(), y.max()
    u = np.zeros((ny, nx))
    u += 0.55 * ((x > 0.08 * lx) & (x < 0.3 * lx) & (y > 0.15 * ly) & (y < 0.65 * ly))
    u += 0.85 * ((x > 0.36 * lx) & (x < 0.46 * lx) & (y > 0.3 * ly) & (y < 0.9 * ly))
    disk = (x - 0.62 * lx) ** 2 + (y - 0.38 * ly) ** 2 < (0.1 * lx) ** 2
    u[disk] = 1.0
    ramp = (x > 0.74 * lx) & (x < 0.95 * lx) & (y > 0.55 * ly) & (y < 0.85 * ly)
    u[ramp] = (x[ramp] - 0.74 * lx) / (0.21 * lx)
    u += 0.35 * ((x > 0.1 * lx) & (x < 0.92 * lx) & (y > 0.04 * ly) & (y < 0.1 * ly))
    u = np.clip(u, 0.0, 1.0)
    u[0, :] = 0.0
    u[-1, :] = 0.0
    u[:, 0] = 0.0
    u[:, -1] = 0.0
    return u.reshape(-1)


INITIAL_CONDITIONS = {
    "heat1d": thermo_initial,
    "diffuse2d": image_initial,
    "advect1d": advection_initial,
    "burgers1d": burgers_initial,
}


# ---------------------------------------------------------------------------
# Parameter spaces
# ---------------------------------------------------------------------------

def thermo_parameters(seed: int = 0):
    """8 training diffusivity triples (corners of [0.2, 1.0]^3, so test
    points interpolate) and 4 seeded interior test triples."""
    corners = np.array(
        [[a, b, c] for a in (0.2, 1.0) for b in (0.2, 1.0) for c in (0.2, 1.0)]
    )
    rng = np.random.default_rng(seed)
    test = rng.uniform(0.3, 0.9, size=(4, 3))
    return corners, test


def image_parameters():
    """Train: region diffusivities from {0, 0.2}^4 with 0, 2 or 3 zero
    regions (11 vectors).  Test: exactly one zero region (4 vectors)."""
    train, test = [], []
    for bits in range(16):
        vec = [0.0 if (bits >> k) & 1 else 0.2 for k in range(4)]
        zeros = sum(1 for v in vec if v == 0.0)
        if zeros in (0, 2, 3):
            train.append(vec)
        elif zeros == 1:
            test.append(vec)
    return np.array(train), np.array(test)


def burgers_parameters():
    train = np.array([[0.015 + (0.015 / 7.0) * j] for j in range(8)])
    test = np.array([[0.021]])
    return train, test


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------

def paper_config(name: str) -> dict:
    """Named presets.  The plain experiment names carry the reference
    geometry and hyperparameters (Table-1 scale); ``*-desk`` variants shrink
    training (and the image resolution) to desktop budgets while keeping the
    same reduction structure."""
    p501_dx2 = (1.0 / 500.0) ** 2
    thermo = {
        "experiment": "thermo",
        "grid": [501],
        "extent": [1.0],
        "dt": 0.4 * p501_dx2,  # stable for every diffusivity up to 1.0
        "steps": 100,
        "latent_dim": 16,
        "width_factor": 128,
        "activation": "elu",
        "seed": 0,
        "sampling": {"mode": "greedy", "count": 22, "candidates": 10, "seed": 0},
        "inversion": {"mode": "gauss_newton"},
        "train": {"epochs_per_stage": 2000, "batch_size": 16},
        "pod": {"enabled": False},
        "energy_window": list(ENERGY_WINDOW),
    }
    image = {
        "experiment": "image",
        "grid": [256, 256],
        "extent": [1.0, 1.0],
        "dt": 0.8 * (1.0 / 255.0) ** 2 / (4.0 * 0.2),
        "steps": 20,
        "latent_dim": 16,
        "width_factor": 128,
        "activation": "elu",
        "seed": 0,
        "sampling": {"mode": "greedy", "count": 63, "candidates": 10, "seed": 0},
        "inversion": {"mode": "gauss_newton"},
        "train": {"epochs_per_stage": 2000, "batch_size": 16},
        "pod": {"enabled": True, "latent_dim": 16},
    }
    advection = {
        "experiment": "advection",
        "grid": [100],
        "extent": [1.0],
        "dt": 0.005,
        "steps": 100,
        "latent_dim": 1,
        "width_factor": 20,
        "activation": "elu",
        "seed": 0,
        "sampling": {"mode": "all"},
        "inversion": {"mode": "gauss_newton"},
        "train": {"epochs_per_stage": 2000, "batch_size": 16},
        "pod": {"enabled": True, "latent_dim": 1},
    }
    burgers = {
        "experiment": "burgers",
        "grid": [256],
        "extent": [100.0],
        "dt": 0.07,
        "steps": 150,
        "latent_dim": 2,
        "width_factor": 64,
        "activation": "elu",
        "seed": 0,
        "sampling": {"mode": "all"},
        "inversion": {"mode": "gauss_newton"},
        "train": {"epochs_per_stage": 2000, "batch_size": 16},
        "pod": {"enabled": True, "latent_dim": 2},
    }
    presets = {
        "thermo": thermo,
        "image": image,
        "advection": advection,
        "burgers": burgers,
    }
    # desk variants: batched training trimmed to desktop wall-clock budgets
    desk = json.loads(json.dumps(thermo))
    desk["width_factor"] = 64
    desk["train"] = {"epochs_per_stage": 60, "batch_size": 32, "plateau_patience": 25}
    presets["thermo-desk"] = desk

    desk = json.loads(json.dumps(image))
    desk["grid"] = [64, 64]
    desk["dt"] = 0.8 * (1.0 / 63.0) ** 2 / (4.0 * 0.2)
    desk["width_factor"] = 48
    desk["train"] = {"epochs_per_stage": 40, "batch_size": 16, "plateau_patience": 20}
    presets["image-desk"] = desk

    desk = json.loads(json.dumps(advection))
    desk["train"] = {"epochs_per_stage": 400, "batch_size": 16, "plateau_patience": 100}
    presets["advection-desk"] = desk

    desk = json.loads(json.dumps(burgers))
    desk["train"] = {"epochs_per_stage": 60, "batch_size": 32, "plateau_patience": 25}
    presets["burgers-desk"] = desk

    if name not in presets:
        raise ValidationError(
            f"unknown preset {name!r}; choose from {sorted(presets)}"
        )
    return presets[name]


# ---------------------------------------------------------------------------
# Config validation
# ---------------------------------------------------------------------------

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["experiment"],
    "additionalProperties": False,
    "properties": {
        "experiment": {"enum": ["thermo", "image", "advection", "burgers"]},
        "grid": {"type": "array", "items": {"type": "integer", "minimum": 3},
                 "minItems": 1, "maxItems": 2},
        "extent": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0},
                   "minItems": 1, "maxItems": 2},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "steps": {"type": "integer", "minimum": 0},
        "train_params": {"type": "array"},
        "test_params": {"type": "array"},
        "latent_dim": {"type": "integer", "minimum": 1},
        "width_factor": {"type": "integer", "minimum": 1},
        "activation": {"enum": ["elu", "siren"]},
        "seed": {"type": "integer"},
        "train": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "base_lr": {"type": "number", "exclusiveMinimum": 0},
                "epochs_per_stage": {"type": "integer", "minimum": 1},
                "batch_size": {"type": "integer", "minimum": 1},
                "plateau_patience": {"type": "integer", "minimum": 1},
                "plateau_tol": {"type": "number", "minimum": 0},
                "paper_faithful": {"type": "boolean"},
            },
        },
        "sampling": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["greedy", "uniform", "random", "all"]},
                "count": {"type": "integer", "minimum": 1},
                "target_accuracy": {"type": "number"},
                "candidates": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer"},
            },
        },
        "inversion": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["gauss_newton", "linearized"]},
                "max_iter": {"type": "integer", "minimum": 1},
                "tol": {"type": "number", "minimum": 0},
                "lam_reg": {"type": "number", "minimum": 0},
            },
        },
        "pod": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "enabled": {"type": "boolean"},
                "latent_dim": {"type": "integer", "minimum": 1},
            },
        },
        "energy_window": {"type": "array", "items": {"type": "number"},
                          "minItems": 2, "maxItems": 2},
    },
}

_VALIDATOR = Draft202012Validator(CONFIG_SCHEMA)

_EXPERIMENT_KIND = {
    "thermo": "heat1d",
    "image": "diffuse2d",
    "advection": "advect1d",
    "burgers": "burgers1d",
}


def validate_config(config: dict) -> dict:
    errors = sorted(_VALIDATOR.iter_errors(config), key=lambda e: e.json_path)
    if errors:
        msgs = "; ".join(f"{e.json_path}: {e.message}" for e in errors)
        raise ValidationError(f"invalid experiment config: {msgs}")
    merged = dict(paper_config(config["experiment"]))
    for key, value in config.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = {**merged[key], **value}
        else:
            merged[key] = value
    spec = build_spec(merged)
    spec.validate()
    sampling = merged.get("sampling", {})
    if sampling.get("mode") in ("uniform", "random", "greedy"):
        count = sampling.get("count")
        if count is not None:
            check_well_posed(count, spec.d, merged["latent_dim"])
    return merged


def build_spec(config: dict) -> PdeSpec:
    kind = _EXPERIMENT_KIND[config["experiment"]]
    placeholder = {"heat1d": (1.0, 1.0, 1.0), "diffuse2d": (0.2,) * 4,
                   "advect1d": (1.0,), "burgers1d": (0.015,)}[kind]
    return PdeSpec(
        kind=kind,
        extent=tuple(config["extent"]),
        grid=tuple(config["grid"]),
        dt=float(config["dt"]),
        steps=int(config["steps"]),
        params=placeholder,
    )


def default_parameters(config: dict):
    name = config["experiment"]
    if "train_params" in config and "test_params" in config:
        return (
            np.atleast_2d(np.asarray(config["train_params"], dtype=np.float64)),
            np.atleast_2d(np.asarray(config["test_params"], dtype=np.float64)),
        )
    if name == "thermo":
        return thermo_parameters(seed=config.get("seed", 0))
    if name == "image":
        return image_parameters()
    if name == "advection":
        return np.array([[1.0]]), np.array([[1.0]])
    if name == "burgers":
        return burgers_parameters()
    raise ValidationError(f"unknown experiment {name!r}")


def make_datasets(config: dict):
    """(train_dataset, test_dataset) for a validated config."""
    spec = build_spec(config)
    ic = INITIAL_CONDITIONS[spec.kind]
    train_mu, test_mu = default_parameters(config)
    train = generate_trajectories(spec, ic, train_mu)
    test = generate_trajectories(spec, ic, test_mu)
    return train, test


# ---------------------------------------------------------------------------
# Model persistence helpers
# ---------------------------------------------------------------------------

def save_embedding(directory, embedding: NeuralFieldEmbedding) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "latent_dim": int(embedding.latent_dim),
        "width_factor": int(embedding.width_factor),
        "m": int(embedding.m_),
        "d": int(embedding.d_),
        "n_points": int(embedding.n_points_),
        "stats": embedding.stats_.to_json_dict(),
    }
    save_mlp(directory / "decoder", embedding.decoder_, meta=meta)
    save_encoder(directory / "encoder", embedding.encoder_, meta=meta)
    np.ascontiguousarray(embedding.coords_, dtype="<f8").tofile(directory / "coords.f64")
    report = {
        "final_train_loss": embedding.final_train_loss_,
        "final_mse": embedding.final_mse_,
        "training_aborted": bool(embedding.training_aborted_),
        "stages": [
            {k: v for k, v in stage.items() if k != "losses"}
            | {"first_loss": stage["losses"][0] if stage["losses"] else None,
               "last_loss": stage["losses"][-1] if stage["losses"] else None}
            for stage in embedding.loss_history_
        ],
        "config": embedding.get_params(),
    }
    (directory / "training_report.json").write_text(json.dumps(report, indent=2))
    losses = []
    for stage in embedding.loss_history_:
        for epoch, value in enumerate(stage["losses"]):
            losses.append((stage["stage"], epoch, value))
    with open(directory / "loss_history.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stage", "epoch", "loss"])
        writer.writerows(losses)


def load_embedding(directory) -> NeuralFieldEmbedding:
    directory = Path(directory)
    decoder, meta = load_mlp(directory / "decoder")
    encoder, _ = load_encoder(directory / "encoder")
    emb = NeuralFieldEmbedding(
        latent_dim=meta["latent_dim"],
        width_factor=meta["width_factor"],
        activation=decoder.activation,
    )
    emb.decoder_ = decoder
    emb.encoder_ = encoder
    emb.stats_ = Standardization.from_json_dict(meta["stats"])
    emb.m_ = meta["m"]
    emb.d_ = meta["d"]
    emb.n_points_ = meta["n_points"]
    emb.n_features_in_ = meta["n_points"] * meta["d"]
    emb.coords_ = np.fromfile(directory / "coords.f64", dtype="<f8").reshape(
        meta["n_points"], meta["m"]
    )
    report_path = directory / "training_report.json"
    if report_path.exists():
        report = json.loads(report_path.read_text())
        emb.final_train_loss_ = report.get("final_train_loss")
        emb.final_mse_ = report.get("final_mse")
        emb.training_aborted_ = report.get("training_aborted", False)
        emb.loss_history_ = report.get("stages", [])
    return emb


# ---------------------------------------------------------------------------
# Pipeline pieces
# ---------------------------------------------------------------------------

def select_samples(field, train_dataset, spec, config: dict):
    """Sample set per the config's sampling section; returns (samples, info)."""
    sampling = config.get("sampling", {"mode": "all"})
    mode = sampling.get("mode", "all")
    r = field.latent_dim
    if mode == "all":
        samples = SampleSet.from_indices(np.arange(spec.n_points), spec.coordinates())
        return samples, {"mode": "all", "n_samples": len(samples)}
    if mode in ("uniform", "random"):
        count = sampling.get("count")
        if count is None:
            raise ValidationError(f"{mode} sampling needs a count")
        samples = baseline_samples(mode, count, spec, r, seed=sampling.get("seed", 0))
        return samples, {"mode": mode, "n_samples": len(samples)}
    if mode == "greedy":
        cfg = GreedyConfig(
            target_accuracy=sampling.get("target_accuracy", 0.0),
            candidates=sampling.get("candidates", 10),
            max_samples=sampling.get("count"),
            seed=sampling.get("seed", 0),
        )
        samples, trace = greedy_select(field, train_dataset, spec, cfg)
        return samples, {"mode": "greedy", "n_samples": len(samples), **trace}
    raise ValidationError(f"unknown sampling mode {mode!r}")


def write_samples_json(path, samples: SampleSet, info: dict) -> None:
    payload = {
        "indices": [int(i) for i in samples.indices],
        "coords": [list(map(float, c)) for c in samples.coords],
        "info": {
            k: (list(map(float, v)) if isinstance(v, (list, np.ndarray)) else v)
            for k, v in info.items()
        },
    }
    Path(path).write_text(json.dumps(payload, indent=2))


def load_samples_json(path, grid_coords) -> SampleSet:
    payload = json.loads(Path(path).read_text())
    return SampleSet.from_indices(payload["indices"], grid_coords)


def make_inversion(config: dict) -> InversionConfig:
    inv = config.get("inversion", {})
    return InversionConfig(
        mode=inv.get("mode", "gauss_newton"),
        max_iter=inv.get("max_iter", 10),
        tol=inv.get("tol", 1e-10),
        lam_reg=inv.get("lam_reg", 0.0),
    )


def make_embedding(config: dict) -> NeuralFieldEmbedding:
    train = config.get("train", {})
    return NeuralFieldEmbedding(
        latent_dim=config["latent_dim"],
        width_factor=config["width_factor"],
        activation=config.get("activation", "elu"),
        base_lr=train.get("base_lr", 1e-4),
        epochs_per_stage=train.get("epochs_per_stage", 2000),
        batch_size=train.get("batch_size", 16),
        plateau_patience=train.get("plateau_patience", 200),
        plateau_tol=train.get("plateau_tol", 1e-6),
        paper_faithful=train.get("paper_faithful", False),
        seed=config.get("seed", 0),
        verbose=config.get("verbose", 0),
    )


def run_experiment(config: dict, out_dir, verbose: bool = True) -> dict:
    """The full pipeline; returns the report dict (also written as JSON)."""
    config = validate_config(config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = {"config": config, "stages": {}, "failed_stage": None}
    t_start = time.time()

    def _stage(name):
        if verbose:
            print(f"[fieldrom] {name} ({time.time() - t_start:.1f}s elapsed)")

    try:
        _stage("generating full-order data")
        spec = build_spec(config)
        train_ds, test_ds = make_datasets(config)
        save_archive(out / "data" / "train", train_ds)
        save_archive(out / "data" / "test", test_ds)
        report["stages"]["simulate"] = {
            "train_trajectories": int(train_ds.n_params),
            "test_trajectories": int(test_ds.n_params),
            "n_points": int(train_ds.n_points),
        }

        _stage("training the embedding")
        emb = make_embedding(config)
        emb.fit(train_ds.snapshot_matrix(), coords=train_ds.coords)
        save_embedding(out / "model", emb)
        recon_train = reconstruction_report(emb, train_ds)
        report["stages"]["train"] = {
            "final_train_loss": emb.final_train_loss_,
            "final_mse": emb.final_mse_,
            "train_relative_l2_mean": recon_train["relative_l2_mean"],
            "decoder_parameters": emb.parameter_count(),
        }

        _stage("selecting integration samples")
        field = NeuralGridField(emb)
        samples, sample_info = select_samples(field, train_ds, spec, config)
        write_samples_json(out / "samples.json", samples, sample_info)
        report["stages"]["select"] = {
            k: v for k, v in sample_info.items() if k != "metric"
        }

        _stage("reduced runs on the test set")
        inversion = make_inversion(config)
        runs_report = []
        energy_window = config.get("energy_window")
        for k in range(test_ds.n_params):
            mu = test_ds.params[k]
            sub = spec.with_params(mu)
            q0 = emb.transform(test_ds.fields[k, 0].reshape(1, -1))[0]
            run = rom_rollout(field, q0, samples, sub, inversion=inversion)
            run_dir = out / "runs" / f"test_{k}"
            run_dir.mkdir(parents=True, exist_ok=True)
            with open(run_dir / "latent.csv", "w", newline="") as fh:
                csv.writer(fh).writerows(run.latent_csv_rows(sub.dt))
            recon_ds = TrajectoryDataset(
                spec=sub, coords=test_ds.coords, params=mu[None, :],
                fields=run.reconstruction[None, ...],
            )
            save_archive(run_dir / "reconstruction", recon_ds)
            truth = test_ds.fields[k]
            rel_series = [
                metrics.relative_l2(run.reconstruction[n], truth[n])
                for n in range(truth.shape[0])
            ]
            entry = {
                "params": list(map(float, mu)),
                "final_relative_l2": rel_series[-1],
                "max_relative_l2": float(np.max(rel_series)),
                "mse": metrics.mse(run.reconstruction, truth),
                "psnr": metrics.psnr(run.reconstruction, truth),
                "timings": run.timings,
                "gn_iterations_mean": float(
                    np.mean([d.iterations for d in run.diagnostics])
                ),
            }
            with open(run_dir / "error_series.csv", "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["n", "t", "relative_l2"])
                for n, val in enumerate(rel_series):
                    writer.writerow([n, n * sub.dt, f"{val:.17g}"])
            if spec.kind == "heat1d" and energy_window:
                nu = sub.diffusivity()
                ee, se, te = heat_energy_budget(
                    run.reconstruction, test_ds.coords, nu, sub.dt, *energy_window
                )
                ee_f, se_f, te_f = heat_energy_budget(
                    truth, test_ds.coords, nu, sub.dt, *energy_window
                )
                entry["energy"] = {
                    "reduced_total_drift": float(
                        np.max(np.abs(te - te[0])) / abs(te[0])
                    ),
                    "full_total_drift": float(
                        np.max(np.abs(te_f - te_f[0])) / abs(te_f[0])
                    ),
                }
                with open(run_dir / "energy.csv", "w", newline="") as fh:
                    writer = csv.writer(fh)
                    writer.writerow(["n", "escaped", "stored", "total"])
                    for n in range(len(ee)):
                        writer.writerow(
                            [n, f"{ee[n]:.17g}", f"{se[n]:.17g}", f"{te[n]:.17g}"]
                        )
            scores, pca_info = latent_pca(run.latents)
            with open(run_dir / "latent_pca.csv", "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["n", "pc1", "pc2"])
                for n, row in enumerate(scores):
                    writer.writerow([n, f"{row[0]:.17g}", f"{row[1]:.17g}"])
            runs_report.append(entry)
        report["stages"]["rom"] = runs_report

        if config.get("pod", {}).get("enabled"):
            _stage("POD baseline")
            pod = PodEmbedding(latent_dim=config["pod"].get("latent_dim", config["latent_dim"]))
            pod.fit(train_ds.snapshot_matrix())
            pod.save(out / "pod" / "basis")
            pod_report = []
            for k in range(test_ds.n_params):
                sub = spec.with_params(test_ds.params[k])
                run = pod_rom_run(pod, sub, test_ds.fields[k, 0])
                truth = test_ds.fields[k]
                pod_report.append(
                    {
                        "params": list(map(float, test_ds.params[k])),
                        "final_relative_l2": metrics.relative_l2(
                            run.reconstruction[-1], truth[-1]
                        ),
                        "mse": metrics.mse(run.reconstruction, truth),
                        "storage_entries": pod.storage_entries(),
                    }
                )
            report["stages"]["pod"] = pod_report

        report["reduction"] = reduction_factors(
            spec.n_points, spec.d, config["latent_dim"], len(samples)
        )
        report["decoder_parameters"] = emb.parameter_count()
    except Exception as exc:
        report["failed_stage"] = f"{type(exc).__name__}: {exc}"
        (out / "report.json").write_text(json.dumps(report, indent=2, default=str))
        raise
    report["wall_seconds"] = time.time() - t_start
    (out / "report.json").write_text(json.dumps(report, indent=2, default=str))
    return report
