"""Variable-importance export from the selection weights.

The selector emits a simplex over covariates at every window position. The
time-varying view aggregates each forecast's window into one row; the global
view is the date-average of those rows, scaled to percent. Computing the
global numbers from the matrix keeps the two views consistent by construction.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import date

import numpy as np

from .errors import DataError, DimensionError

REDUCERS = ("mean", "max")


@dataclass(frozen=True)
class ImportanceMatrix:
    """Row-stochastic (dates x covariates) importance weights."""
    dates: tuple[date, ...]
    names: tuple[str, ...]
    weights: np.ndarray

    def __post_init__(self):
        if self.weights.shape != (len(self.dates), len(self.names)):
            raise DimensionError(
                f"importance matrix {self.weights.shape} vs "
                f"{len(self.dates)} dates x {len(self.names)} names")


def importance_matrix(omegas: np.ndarray, dates, names, reduce: str = "mean") -> ImportanceMatrix:
    """Aggregate per-step selector weights (N, T, F) to one row per forecast.

    "mean" averages over the window; "max" takes the per-variable peak and
    renormalizes so rows stay on the simplex.
    """
    omegas = np.asarray(omegas, dtype=np.float64)
    if omegas.ndim != 3:
        raise DimensionError(f"selector weights must be (dates, window, covariates), got {omegas.shape}")
    if reduce not in REDUCERS:
        raise DataError(f"reduce must be one of {REDUCERS}, got {reduce!r}")
    if reduce == "mean":
        rows = omegas.mean(axis=1)
    else:
        rows = omegas.max(axis=1)
        rows = rows / rows.sum(axis=1, keepdims=True)
    return ImportanceMatrix(dates=tuple(dates), names=tuple(names), weights=rows)


def global_importance(matrix: ImportanceMatrix) -> dict[str, float]:
    """Percent importance per covariate; sums to 100."""
    if matrix.weights.shape[0] == 0:
        raise DataError("global importance needs at least one forecast date")
    means = matrix.weights.mean(axis=0) * 100.0
    return {name: float(v) for name, v in zip(matrix.names, means)}


def write_global_importance_csv(matrix: ImportanceMatrix, path) -> None:
    ranking = sorted(global_importance(matrix).items(), key=lambda kv: (-kv[1], kv[0]))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["covariate", "importance_pct"])
        for name, pct in ranking:
            writer.writerow([name, repr(pct)])


def write_importance_matrix_csv(matrix: ImportanceMatrix, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date"] + list(matrix.names))
        for d, row in zip(matrix.dates, matrix.weights):
            writer.writerow([d.isoformat()] + [repr(float(v)) for v in row])
