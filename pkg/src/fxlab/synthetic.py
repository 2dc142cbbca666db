"""Synthetic panel generator with a plantable linear/AR signal.

The target is written as a price series whose percent log returns follow

    r_t = sum_i coef_i * x_{i,t-1} + ar * r_{t-1} + noise_std * eps_t

with iid standard-normal covariates x_i published as daily level series. Files
follow the CSV-plus-manifest contract of the data pipeline, so generated
datasets are indistinguishable from real ones downstream.
"""
from __future__ import annotations

import json
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from .data import RawSeries, build_panel, write_series_csv
from .errors import ConfigError

TARGET_NAME = "fx"


def business_days(start: date, count: int) -> tuple[date, ...]:
    out = []
    d = start
    while len(out) < count:
        if d.weekday() < 5:
            out.append(d)
        d += timedelta(days=1)
    return tuple(out)


def _simulate(n: int, n_covariates: int, signal_coefs, noise_std: float,
              seed: int, ar_coef: float):
    if n < 60:
        raise ConfigError(f"need at least 60 days of synthetic data, got {n}")
    if n_covariates < 0:
        raise ConfigError(f"n_covariates must be >= 0, got {n_covariates}")
    coefs = np.asarray(signal_coefs, dtype=np.float64)
    if coefs.shape != (n_covariates,):
        raise ConfigError(
            f"signal_coefs has {coefs.size} entries for {n_covariates} covariates")
    if noise_std < 0:
        raise ConfigError(f"noise_std must be >= 0, got {noise_std}")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, n_covariates))
    eps = rng.standard_normal(n)
    r = np.zeros(n)
    for t in range(1, n):
        r[t] = float(x[t - 1] @ coefs) + ar_coef * r[t - 1] + noise_std * eps[t]
    prices = 100.0 * np.exp(np.cumsum(r) / 100.0)  # r[0] == 0, so price[0] == 100
    return x, r, prices


def generate_files(out_dir: str | Path, n: int = 1000, n_covariates: int = 4,
                   signal_coefs=(0.8, 0.0, 0.0, 0.0), noise_std: float = 0.1,
                   seed: int = 7, ar_coef: float = 0.0,
                   start: date = date(2015, 1, 2)) -> Path:
    """Write per-series CSVs plus manifest.json; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    x, _, prices = _simulate(n, n_covariates, signal_coefs, noise_std, seed, ar_coef)
    dates = business_days(start, n)

    entries = [{"name": TARGET_NAME, "path": f"{TARGET_NAME}.csv",
                "frequency": "daily", "transform": "log-return"}]
    write_series_csv(out_dir / f"{TARGET_NAME}.csv", dates, prices)
    for i in range(n_covariates):
        name = f"x{i + 1}"
        write_series_csv(out_dir / f"{name}.csv", dates, x[:, i])
        entries.append({"name": name, "path": f"{name}.csv",
                        "frequency": "daily", "transform": "level"})

    manifest = {
        "target": TARGET_NAME,
        "series": entries,
        "generator": {
            "n": n, "n_covariates": n_covariates,
            "signal_coefs": [float(c) for c in np.asarray(signal_coefs, dtype=np.float64)],
            "noise_std": noise_std, "ar_coef": ar_coef, "seed": seed,
        },
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def generate_panel(n: int = 1000, n_covariates: int = 4,
                   signal_coefs=(0.8, 0.0, 0.0, 0.0), noise_std: float = 0.1,
                   seed: int = 7, ar_coef: float = 0.0):
    """In-memory panel, same construction as generate_files without the disk trip."""
    x, _, prices = _simulate(n, n_covariates, signal_coefs, noise_std, seed, ar_coef)
    dates = business_days(date(2015, 1, 2), n)
    series = [RawSeries(name=TARGET_NAME, dates=dates, values=prices,
                        frequency="daily", transform="log-return")]
    for i in range(n_covariates):
        series.append(RawSeries(name=f"x{i + 1}", dates=dates, values=x[:, i].copy(),
                                frequency="daily", transform="level"))
    return build_panel(series, TARGET_NAME)
