"""Command-line harness.

Subcommands cover the pipeline stages individually (simulate, train,
select-samples, rom-run, pod, eval, sweep-dt, pareto) plus ``run`` for the
whole pipeline in one go.  Exit codes: 0 success, 2 configuration/validation
failure, 3 numerical divergence.

Numeric modules are imported lazily inside the commands so ``--threads`` can
pin the BLAS thread pools before numpy loads.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

EXIT_VALIDATION = 2
EXIT_DIVERGENCE = 3


def _pin_threads(n: int) -> None:
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ[var] = str(n)


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _guarded(fn):
    """Map package exceptions onto the documented exit codes."""
    from functools import wraps

    @wraps(fn)
    def wrapper(*args, **kwargs):
        from .errors import DivergenceError, ValidationError

        try:
            return fn(*args, **kwargs)
        except ValidationError as exc:
            _fail(EXIT_VALIDATION, str(exc))
        except DivergenceError as exc:
            _fail(EXIT_DIVERGENCE, str(exc))

    return wrapper


def _load_config(config_path, paper_config_name, seed, overrides=None):
    from .errors import ValidationError
    from .experiments import paper_config, validate_config

    if config_path is None and paper_config_name is None:
        raise ValidationError("provide --config or --paper-config")
    cfg = {}
    if paper_config_name is not None:
        cfg.update(paper_config(paper_config_name))
    if config_path is not None:
        try:
            cfg.update(json.loads(Path(config_path).read_text()))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config is not valid JSON: {exc}") from exc
    if seed is not None:
        cfg["seed"] = seed
    for key, value in (overrides or {}).items():
        if value is not None:
            cfg[key] = value
    return validate_config(cfg)


@click.group()
@click.option("--threads", type=int, default=None,
              help="Pin BLAS/OpenMP thread pools before numpy is imported.")
def main(threads):
    """Reduced-order PDE experiments on a trained neural-field embedding."""
    if threads is not None:
        _pin_threads(threads)


_config_options = [
    click.option("--config", "config_path", type=click.Path(exists=True),
                 default=None, help="JSON experiment config."),
    click.option("--paper-config", "paper_config_name", default=None,
                 help="Named preset (thermo, image, advection, burgers, *-desk)."),
    click.option("--seed", type=int, default=None, help="Override config seed."),
]


def _with_config_options(fn):
    for opt in reversed(_config_options):
        fn = opt(fn)
    return fn


@main.command()
@_with_config_options
@click.option("--out", required=True, type=click.Path(), help="Output directory.")
@_guarded
def simulate(config_path, paper_config_name, seed, out):
    """Generate full-order training/testing snapshot archives."""
    from .experiments import make_datasets
    from .pde import save_archive

    cfg = _load_config(config_path, paper_config_name, seed)
    train_ds, test_ds = make_datasets(cfg)
    save_archive(Path(out) / "train", train_ds)
    save_archive(Path(out) / "test", test_ds)
    (Path(out) / "config.json").write_text(json.dumps(cfg, indent=2))
    click.echo(
        f"wrote {train_ds.n_params} training and {test_ds.n_params} testing "
        f"trajectories ({train_ds.n_points} points each) to {out}"
    )


@main.command()
@_with_config_options
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True),
              help="Training snapshot archive.")
@click.option("--out", required=True, type=click.Path(), help="Model directory.")
@_guarded
def train(config_path, paper_config_name, seed, data_dir, out):
    """Fit the field embedding (decoder + encoder) on an archive."""
    from .experiments import make_embedding, save_embedding
    from .pde import load_archive

    cfg = _load_config(config_path, paper_config_name, seed)
    dataset = load_archive(data_dir)
    emb = make_embedding(cfg)
    emb.verbose = 1
    emb.fit(dataset.snapshot_matrix(), coords=dataset.coords)
    save_embedding(out, emb)
    click.echo(
        f"trained embedding: final mse {emb.final_mse_:.3e}, "
        f"{emb.parameter_count()} decoder parameters -> {out}"
    )


@main.command("select-samples")
@_with_config_options
@click.option("--model", "model_dir", required=True, type=click.Path(exists=True))
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True),
              help="Training snapshot archive (greedy residuals run on it).")
@click.option("--out", required=True, type=click.Path(), help="samples.json path.")
@_guarded
def select_samples_cmd(config_path, paper_config_name, seed, model_dir, data_dir, out):
    """Choose integration samples (greedy, uniform, or random)."""
    from .dynamics import NeuralGridField
    from .experiments import load_embedding, select_samples, write_samples_json
    from .pde import load_archive

    cfg = _load_config(config_path, paper_config_name, seed)
    dataset = load_archive(data_dir)
    emb = load_embedding(model_dir)
    field = NeuralGridField(emb)
    samples, info = select_samples(field, dataset, dataset.spec, cfg)
    write_samples_json(out, samples, info)
    click.echo(f"selected {len(samples)} samples ({info['mode']}) -> {out}")


@main.command("rom-run")
@_with_config_options
@click.option("--model", "model_dir", required=True, type=click.Path(exists=True))
@click.option("--samples", "samples_path", default=None, type=click.Path(exists=True),
              help="samples.json; defaults to every grid point.")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True),
              help="Test snapshot archive (initial conditions + ground truth).")
@click.option("--out", required=True, type=click.Path())
@_guarded
def rom_run(config_path, paper_config_name, seed, model_dir, samples_path, data_dir, out):
    """Reduced runs over every trajectory in a test archive."""
    import numpy as np

    from . import metrics
    from .dynamics import NeuralGridField, SampleSet, rom_rollout
    from .experiments import (TrajectoryDataset, load_embedding,
                              load_samples_json, make_inversion)
    from .pde import load_archive, save_archive

    cfg = _load_config(config_path, paper_config_name, seed)
    dataset = load_archive(data_dir)
    emb = load_embedding(model_dir)
    field = NeuralGridField(emb)
    spec = dataset.spec
    if samples_path is None:
        samples = SampleSet.from_indices(np.arange(spec.n_points), spec.coordinates())
    else:
        samples = load_samples_json(samples_path, spec.coordinates())
    inversion = make_inversion(cfg)
    out_dir = Path(out)
    results = []
    import csv as _csv

    for k in range(dataset.n_params):
        sub = spec.with_params(dataset.params[k])
        q0 = emb.transform(dataset.fields[k, 0].reshape(1, -1))[0]
        run = rom_rollout(field, q0, samples, sub, inversion=inversion)
        run_dir = out_dir / f"run_{k}"
        run_dir.mkdir(parents=True, exist_ok=True)
        with open(run_dir / "latent.csv", "w", newline="") as fh:
            _csv.writer(fh).writerows(run.latent_csv_rows(sub.dt))
        recon_ds = TrajectoryDataset(
            spec=sub, coords=dataset.coords, params=dataset.params[k][None, :],
            fields=run.reconstruction[None, ...],
        )
        save_archive(run_dir / "reconstruction", recon_ds)
        err = metrics.relative_l2(run.reconstruction[-1], dataset.fields[k, -1])
        results.append({"params": list(map(float, dataset.params[k])),
                        "final_relative_l2": err, "timings": run.timings})
        click.echo(f"run_{k}: final relative error {err:.4%}")
    (out_dir / "rom_runs.json").write_text(json.dumps(results, indent=2))


@main.command()
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True),
              help="Training snapshot archive.")
@click.option("--latent-dim", type=int, required=True)
@click.option("--out", required=True, type=click.Path(), help="Basis file stem.")
@click.option("--run-data", default=None, type=click.Path(exists=True),
              help="Optional test archive to time-step on the POD subspace.")
@_guarded
def pod(data_dir, latent_dim, out, run_data):
    """Fit the POD baseline basis (and optionally run it)."""
    from . import metrics
    from .dynamics import pod_rom_run
    from .pde import load_archive
    from .pod import PodEmbedding

    dataset = load_archive(data_dir)
    basis = PodEmbedding(latent_dim=latent_dim).fit(dataset.snapshot_matrix())
    basis.save(out)
    click.echo(
        f"pod basis rank {latent_dim}: truncation residual "
        f"{basis.truncation_error():.3e}, {basis.storage_entries()} stored entries"
    )
    if run_data:
        test = load_archive(run_data)
        for k in range(test.n_params):
            sub = test.spec.with_params(test.params[k])
            run = pod_rom_run(basis, sub, test.fields[k, 0])
            err = metrics.relative_l2(run.reconstruction[-1], test.fields[k, -1])
            click.echo(f"pod run_{k}: final relative error {err:.4%}")


@main.command("eval")
@click.option("--candidate", required=True, type=click.Path(exists=True),
              help="Archive with the fields under test.")
@click.option("--reference", required=True, type=click.Path(exists=True),
              help="Ground-truth archive.")
@click.option("--out", default=None, type=click.Path())
@_guarded
def eval_cmd(candidate, reference, out):
    """MSE / relative L2 / PSNR between two snapshot archives."""
    from . import metrics
    from .errors import ValidationError
    from .pde import load_archive

    a = load_archive(candidate)
    b = load_archive(reference)
    if a.fields.shape != b.fields.shape:
        raise ValidationError(
            f"archive shapes differ: {a.fields.shape} vs {b.fields.shape}"
        )
    report = []
    for k in range(a.n_params):
        entry = metrics.evaluate(a.fields[k], b.fields[k])
        entry["final_relative_l2"] = metrics.relative_l2(
            a.fields[k, -1], b.fields[k, -1]
        )
        report.append(entry)
    text = json.dumps(report, indent=2)
    click.echo(text)
    if out:
        Path(out).write_text(text)


@main.command("sweep-dt")
@_with_config_options
@click.option("--model", "model_dir", required=True, type=click.Path(exists=True))
@click.option("--samples", "samples_path", default=None, type=click.Path(exists=True))
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True),
              help="Archive providing the initial condition and geometry.")
@click.option("--multipliers", default="1,2,4,8",
              help="Comma-separated time-step multipliers.")
@click.option("--out", default=None, type=click.Path())
@_guarded
def sweep_dt(config_path, paper_config_name, seed, model_dir, samples_path,
             data_dir, multipliers, out):
    """Boundedness verdicts for full-order vs reduced runs at scaled dt."""
    import numpy as np

    from .analysis import stability_sweep
    from .dynamics import NeuralGridField, SampleSet
    from .experiments import load_embedding, load_samples_json, make_inversion

    from .pde import load_archive

    cfg = _load_config(config_path, paper_config_name, seed)
    dataset = load_archive(data_dir)
    emb = load_embedding(model_dir)
    field = NeuralGridField(emb)
    spec = dataset.spec.with_params(dataset.params[0])
    if samples_path is None:
        samples = SampleSet.from_indices(np.arange(spec.n_points), spec.coordinates())
    else:
        samples = load_samples_json(samples_path, spec.coordinates())
    mults = [float(tok) for tok in multipliers.split(",") if tok.strip()]
    results = stability_sweep(
        spec, dataset.fields[0, 0], field, samples, mults,
        inversion=make_inversion(cfg),
    )
    text = json.dumps(results, indent=2)
    click.echo(text)
    if out:
        Path(out).write_text(text)


@main.command()
@_with_config_options
@click.option("--model", "model_dirs", multiple=True, required=True,
              type=click.Path(exists=True),
              help="One or more trained model directories (e.g. several widths).")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True),
              help="Test snapshot archive.")
@click.option("--sample-counts", default="10,22,40",
              help="Comma-separated integration-sample counts (uniform sets).")
@click.option("--inversions", default="gauss_newton,linearized")
@click.option("--out", required=True, type=click.Path(), help="CSV output path.")
@_guarded
def pareto(config_path, paper_config_name, seed, model_dirs, data_dir,
           sample_counts, inversions, out):
    """Accuracy/cost grid over width x sample count x inversion mode."""
    import csv as _csv
    import time as _time

    from . import metrics
    from .dynamics import InversionConfig, NeuralGridField, rom_rollout
    from .experiments import load_embedding
    from .pde import load_archive
    from .sampling import baseline_samples

    dataset = load_archive(data_dir)
    counts = [int(tok) for tok in sample_counts.split(",") if tok.strip()]
    modes = [tok.strip() for tok in inversions.split(",") if tok.strip()]
    rows = [["model", "width_factor", "n_samples", "inversion",
             "final_relative_l2", "seconds_per_step"]]
    for model_dir in model_dirs:
        emb = load_embedding(model_dir)
        field = NeuralGridField(emb)
        for count in counts:
            for mode in modes:
                spec = dataset.spec.with_params(dataset.params[0])
                samples = baseline_samples("uniform", count, spec, emb.latent_dim)
                t0 = _time.time()
                run = rom_rollout(
                    field, emb.transform(dataset.fields[0, 0].reshape(1, -1))[0],
                    samples, spec, inversion=InversionConfig(mode=mode),
                )
                secs = (_time.time() - t0) / spec.steps
                err = metrics.relative_l2(run.reconstruction[-1], dataset.fields[0, -1])
                rows.append([Path(model_dir).name, emb.width_factor, count, mode,
                             f"{err:.6g}", f"{secs:.6g}"])
                click.echo(f"{Path(model_dir).name} |M|={count} {mode}: {err:.4%}")
    with open(out, "w", newline="") as fh:
        _csv.writer(fh).writerows(rows)


@main.command()
@_with_config_options
@click.option("--out", required=True, type=click.Path(), help="Run directory.")
@click.option("--plots/--no-plots", default=False,
              help="Also render SVG line plots (needs matplotlib).")
@_guarded
def run(config_path, paper_config_name, seed, out, plots):
    """Full pipeline: simulate, train, select, reduced runs, evaluate."""
    from .experiments import run_experiment

    cfg = _load_config(config_path, paper_config_name, seed)
    report = run_experiment(cfg, out)
    if plots:
        _render_plots(Path(out))
    worst = max(
        (entry["final_relative_l2"] for entry in report["stages"]["rom"]),
        default=float("nan"),
    )
    click.echo(f"done; worst final relative error {worst:.4%}; report in {out}/report.json")


def _render_plots(out_dir: Path) -> None:
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        click.echo("matplotlib not installed; skipping plots", err=True)
        return
    import csv as _csv

    for run_dir in sorted(out_dir.glob("runs/test_*")):
        for name, cols in (("error_series", ("t", "relative_l2")),
                           ("energy", ("n", "total"))):
            path = run_dir / f"{name}.csv"
            if not path.exists():
                continue
            with open(path) as fh:
                rows = list(_csv.DictReader(fh))
            xs = [float(row[cols[0]]) for row in rows]
            ys = [float(row[cols[1]]) for row in rows]
            fig, ax = plt.subplots(figsize=(5, 3))
            ax.plot(xs, ys)
            ax.set_xlabel(cols[0])
            ax.set_ylabel(cols[1])
            fig.tight_layout()
            fig.savefig(run_dir / f"{name}.svg")
            plt.close(fig)


if __name__ == "__main__":
    main()
