"""Affine standardization of fields and coordinates.

Field channels are shifted/scaled to zero mean and unit variance over the
whole training set.  Coordinates are z-scored for ELU decoders and mapped
affinely onto [-1, 1] per axis for sine decoders.  The transforms are stored
so they can be inverted exactly (the networks work in standardized units, all
physics happens in raw units).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

STD_FLOOR = 1e-12  # guards degenerate (constant) channels


@dataclass(frozen=True)
class Standardization:
    field_mean: np.ndarray
    field_std: np.ndarray
    coord_mode: str  # "zscore" or "unit"
    coord_shift: np.ndarray
    coord_scale: np.ndarray

    def apply_fields(self, f):
        return (np.asarray(f, dtype=np.float64) - self.field_mean) / self.field_std

    def invert_fields(self, f):
        return np.asarray(f, dtype=np.float64) * self.field_std + self.field_mean

    def apply_coords(self, x):
        return (np.asarray(x, dtype=np.float64) - self.coord_shift) / self.coord_scale

    def invert_coords(self, x):
        return np.asarray(x, dtype=np.float64) * self.coord_scale + self.coord_shift

    def to_json_dict(self) -> dict:
        return {
            "field_mean": list(map(float, self.field_mean)),
            "field_std": list(map(float, self.field_std)),
            "coord_mode": self.coord_mode,
            "coord_shift": list(map(float, self.coord_shift)),
            "coord_scale": list(map(float, self.coord_scale)),
        }

    @classmethod
    def from_json_dict(cls, obj) -> "Standardization":
        return cls(
            field_mean=np.asarray(obj["field_mean"], dtype=np.float64),
            field_std=np.asarray(obj["field_std"], dtype=np.float64),
            coord_mode=obj["coord_mode"],
            coord_shift=np.asarray(obj["coord_shift"], dtype=np.float64),
            coord_scale=np.asarray(obj["coord_scale"], dtype=np.float64),
        )


def fit_standardization(fields, coords, activation: str) -> Standardization:
    """Fit stats from raw training data.

    ``fields`` is (..., d) raw values, ``coords`` is (P, m).  ``activation``
    selects the coordinate treatment ("elu" -> z-score, "siren" -> [-1, 1]).
    """
    fields = np.asarray(fields, dtype=np.float64)
    coords = np.asarray(coords, dtype=np.float64)
    d = fields.shape[-1]
    flat = fields.reshape(-1, d)
    mean = flat.mean(axis=0)
    std = flat.std(axis=0)
    if np.any(std < STD_FLOOR):
        warnings.warn("zero-variance field channel; standard deviation floored")
        std = np.maximum(std, STD_FLOOR)
    if activation == "siren":
        lo, hi = coords.min(axis=0), coords.max(axis=0)
        shift = 0.5 * (lo + hi)
        scale = 0.5 * (hi - lo)
        scale = np.where(scale < STD_FLOOR, 1.0, scale)
        mode = "unit"
    else:
        shift = coords.mean(axis=0)
        scale = coords.std(axis=0)
        scale = np.where(scale < STD_FLOOR, 1.0, scale)
        mode = "zscore"
    return Standardization(mean, std, mode, shift, scale)


def standardize_dataset(dataset, activation: str):
    """Return (standardized dataset copy, stats); inversion is exact."""
    stats = fit_standardization(dataset.fields, dataset.coords, activation)
    std_ds = replace(
        dataset,
        coords=stats.apply_coords(dataset.coords),
        fields=stats.apply_fields(dataset.fields),
        stats=stats,
    )
    return std_ds, stats
