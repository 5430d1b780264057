"""Reduced-order PDE solving on a continuous neural-field embedding.

Workflow: generate full-order snapshot data (:mod:`fieldrom.pde`), fit a
:class:`NeuralFieldEmbedding` (or the :class:`PodEmbedding` baseline), pick
integration samples (:mod:`fieldrom.sampling`), then evolve the latent state
with :func:`rom_rollout` - decoding, exact PDE stepping at the samples, and
least-squares inversion every step.
"""

from .analysis import (
    latent_line_samples,
    latent_pca,
    reduction_factors,
    stability_sweep,
)
from .dynamics import (
    InversionConfig,
    LatentState,
    LinearGridField,
    NeuralGridField,
    RomRun,
    SampleSet,
    check_well_posed,
    encode_initial,
    infer_full_space,
    invert_gauss_newton,
    invert_linearized,
    pod_rom_run,
    rom_rollout,
    rom_step,
)
from .embedding import NeuralFieldEmbedding, reconstruction_report
from .errors import (
    DiscretizationMismatchError,
    DivergenceError,
    InversionError,
    ValidationError,
)
from .experiments import paper_config, run_experiment, validate_config
from .metrics import evaluate, mse, psnr, relative_l2
from .pde import (
    PdeSpec,
    TrajectoryDataset,
    generate_trajectories,
    heat_energy_budget,
    load_archive,
    save_archive,
)
from .pod import PodEmbedding
from .sampling import (
    GreedyConfig,
    baseline_samples,
    calculate_residual,
    greedy_select,
    residual_metric,
)
from .standardize import Standardization, standardize_dataset

__version__ = "0.1.0"

__all__ = [
    "DiscretizationMismatchError",
    "DivergenceError",
    "GreedyConfig",
    "InversionConfig",
    "InversionError",
    "LatentState",
    "LinearGridField",
    "NeuralFieldEmbedding",
    "NeuralGridField",
    "PdeSpec",
    "PodEmbedding",
    "RomRun",
    "SampleSet",
    "Standardization",
    "TrajectoryDataset",
    "ValidationError",
    "baseline_samples",
    "calculate_residual",
    "check_well_posed",
    "encode_initial",
    "evaluate",
    "generate_trajectories",
    "greedy_select",
    "heat_energy_budget",
    "infer_full_space",
    "invert_gauss_newton",
    "invert_linearized",
    "latent_line_samples",
    "latent_pca",
    "load_archive",
    "mse",
    "paper_config",
    "pod_rom_run",
    "psnr",
    "reconstruction_report",
    "reduction_factors",
    "relative_l2",
    "residual_metric",
    "rom_rollout",
    "rom_step",
    "run_experiment",
    "save_archive",
    "stability_sweep",
    "standardize_dataset",
    "validate_config",
]
