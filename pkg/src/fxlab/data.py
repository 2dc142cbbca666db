"""Data pipeline: series transforms, calendar alignment, splits, windows.

Raw inputs are per-series CSVs (date,value) tied together by a JSON manifest.
Each series is transformed on its native dates (level, log-return, or first
difference), forward-filled onto the trading calendar, chronologically split
80/10/10, and standardized with training-subset statistics only.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace
from datetime import date
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import DataError

TRANSFORMS = ("level", "log-return", "difference")


@dataclass(frozen=True)
class RawSeries:
    name: str
    dates: tuple[date, ...]
    values: np.ndarray
    frequency: str = "daily"
    transform: str = "level"

    def __post_init__(self):
        if len(self.dates) != len(self.values):
            raise DataError(f"series {self.name}: {len(self.dates)} dates vs {len(self.values)} values")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise DataError(f"series {self.name}: dates must be strictly increasing")
        if self.transform not in TRANSFORMS:
            raise DataError(f"series {self.name}: unknown transform {self.transform!r}")


def log_returns(series: RawSeries) -> RawSeries:
    """Percent log returns: 100*(ln S_t - ln S_{t-1}). Drops the first date."""
    if np.any(series.values <= 0):
        raise DataError(f"series {series.name}: log returns need positive values")
    r = 100.0 * np.diff(np.log(series.values))
    return replace(series, dates=series.dates[1:], values=r, transform="level")


def first_difference(series: RawSeries) -> RawSeries:
    d = np.diff(series.values)
    return replace(series, dates=series.dates[1:], values=d, transform="level")


def apply_transform(series: RawSeries) -> RawSeries:
    if series.transform == "log-return":
        return log_returns(series)
    if series.transform == "difference":
        return first_difference(series)
    return series


def forward_fill(series: RawSeries, calendar: tuple[date, ...]) -> np.ndarray:
    """Latest observation at or before each calendar date. Never looks ahead."""
    if calendar[0] < series.dates[0]:
        raise DataError(
            f"series {series.name}: calendar starts {calendar[0]} before first observation {series.dates[0]}")
    positions = np.searchsorted(np.array(series.dates), np.array(calendar), side="right") - 1
    return series.values[positions]


@dataclass(frozen=True)
class SplitSpec:
    """Row ranges: train [0, train_end), val [train_end, val_end), test [val_end, n)."""
    train_end: int
    val_end: int
    n: int

    def bounds(self, subset: str) -> tuple[int, int]:
        if subset == "train":
            return 0, self.train_end
        if subset == "val":
            return self.train_end, self.val_end
        if subset == "test":
            return self.val_end, self.n
        if subset == "all":
            return 0, self.n
        raise DataError(f"unknown subset {subset!r}")


def chronological_split(n: int, train_frac: float = 0.8, val_frac: float = 0.1) -> SplitSpec:
    if n < 3:
        raise DataError(f"cannot split {n} rows three ways")
    if not (0 < train_frac and 0 < val_frac and train_frac + val_frac < 1):
        raise DataError(f"bad split fractions ({train_frac}, {val_frac})")
    return SplitSpec(math.floor(n * train_frac), math.floor(n * (train_frac + val_frac)), n)


@dataclass(frozen=True)
class Standardizer:
    columns: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray
    target_mean: float
    target_std: float

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std

    def invert(self, z: np.ndarray) -> np.ndarray:
        return z * self.std + self.mean

    def apply_target(self, y: np.ndarray) -> np.ndarray:
        return (y - self.target_mean) / self.target_std

    def invert_target(self, z: np.ndarray) -> np.ndarray:
        return z * self.target_std + self.target_mean


@dataclass(frozen=True)
class Panel:
    """Aligned, standardized design matrix plus the raw target kept for scoring."""
    dates: tuple[date, ...]
    target_name: str
    covariate_names: tuple[str, ...]
    features: np.ndarray        # (N, F) standardized
    target: np.ndarray          # (N,) standardized percent log returns
    target_raw: np.ndarray      # (N,) percent log returns, untouched
    split: SplitSpec
    standardizer: Standardizer

    @property
    def n_covariates(self) -> int:
        return len(self.covariate_names)


def build_panel(series_list: list[RawSeries], target_name: str,
                train_frac: float = 0.8, val_frac: float = 0.1) -> Panel:
    """Transform each series, align on the daily calendar, split, standardize.

    Every listed series becomes a covariate column (the target's own returns
    included); the calendar is the intersection of post-transform dates of the
    daily series.
    """
    names = [s.name for s in series_list]
    if len(set(names)) != len(names):
        raise DataError("duplicate series names in manifest")
    if target_name not in names:
        raise DataError(f"target {target_name!r} not among series {names}")
    transformed = {s.name: apply_transform(s) for s in series_list}

    daily = [s for s in series_list if s.frequency == "daily"]
    if not daily:
        raise DataError("no daily series to define the trading calendar")
    calendar_set = set(transformed[daily[0].name].dates)
    for s in daily[1:]:
        calendar_set &= set(transformed[s.name].dates)
    if not calendar_set:
        raise DataError("daily series share no trading dates")
    calendar = tuple(sorted(calendar_set))

    columns = []
    for s in series_list:
        columns.append(forward_fill(transformed[s.name], calendar))
    features_raw = np.column_stack(columns)
    target_raw = forward_fill(transformed[target_name], calendar)

    split = chronological_split(len(calendar), train_frac, val_frac)
    std = fit_standardizer(features_raw, target_raw, tuple(names), target_name, split)
    return Panel(
        dates=calendar,
        target_name=target_name,
        covariate_names=tuple(names),
        features=std.apply(features_raw),
        target=std.apply_target(target_raw),
        target_raw=target_raw,
        split=split,
        standardizer=std,
    )


def fit_standardizer(features: np.ndarray, target: np.ndarray, columns: tuple[str, ...],
                     target_name: str, split: SplitSpec) -> Standardizer:
    train_x = features[:split.train_end]
    train_y = target[:split.train_end]
    mean = train_x.mean(axis=0)
    stddev = train_x.std(axis=0)
    for j, name in enumerate(columns):
        # exact-range check: a constant column can still carry std ~1e-16
        # because its mean rounds
        if stddev[j] == 0.0 or np.ptp(train_x[:, j]) == 0.0:
            raise DataError(f"column {name!r} is constant over the training rows")
    y_std = float(train_y.std())
    if y_std == 0.0 or np.ptp(train_y) == 0.0:
        raise DataError(f"target {target_name!r} is constant over the training rows")
    return Standardizer(columns=columns, mean=mean, std=stddev,
                        target_mean=float(train_y.mean()), target_std=y_std)


@dataclass(frozen=True)
class WindowBatch:
    inputs: np.ndarray   # (B, T, F) standardized
    targets: np.ndarray  # (B,) standardized
    rows: np.ndarray     # (B,) target row index into the panel


def window_rows(panel: Panel, window: int, subset: str) -> np.ndarray:
    """Target rows in `subset` with a full T-row history strictly before them."""
    if window < 1:
        raise DataError(f"window must be >= 1, got {window}")
    lo, hi = panel.split.bounds(subset)
    return np.arange(max(lo, window), hi)


def make_windows(panel: Panel, window: int, subset: str,
                 batch_size: int | None = None) -> Iterator[WindowBatch]:
    """Yield batches of (inputs, target) windows in chronological order.

    The window for target row i covers rows [i-window, i); validation and test
    windows reach back into earlier subsets for history, targets never leave
    the subset.
    """
    rows = window_rows(panel, window, subset)
    if batch_size is None:
        batch_size = max(len(rows), 1)
    for start in range(0, len(rows), batch_size):
        chunk = rows[start:start + batch_size]
        if len(chunk) == 0:
            continue
        inputs = np.stack([panel.features[i - window:i] for i in chunk])
        yield WindowBatch(inputs=inputs, targets=panel.target[chunk], rows=chunk)


def gather_windows(panel: Panel, window: int, subset: str) -> WindowBatch:
    """All windows of a subset as one batch."""
    batches = list(make_windows(panel, window, subset))
    if not batches:
        raise DataError(f"subset {subset!r} has no eligible windows at window={window}")
    return batches[0]


# ---------------------------------------------------------------------------
# file formats

def read_series_csv(path: str | Path, name: str, frequency: str = "daily",
                    transform: str = "level") -> RawSeries:
    path = Path(path)
    if not path.exists():
        raise DataError(f"series file not found: {path}")
    dates, values = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["date", "value"]:
            raise DataError(f"{path}: expected header 'date,value', got {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise DataError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            try:
                dates.append(date.fromisoformat(row[0].strip()))
                values.append(float(row[1]))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
    if not dates:
        raise DataError(f"{path}: no data rows")
    return RawSeries(name=name, dates=tuple(dates), values=np.array(values, dtype=np.float64),
                     frequency=frequency, transform=transform)


def write_series_csv(path: str | Path, dates, values) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "value"])
        for d, v in zip(dates, values):
            writer.writerow([d.isoformat(), repr(float(v))])


def load_manifest(path: str | Path) -> tuple[list[RawSeries], str]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    try:
        spec = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from exc
    for key in ("target", "series"):
        if key not in spec:
            raise DataError(f"{path}: manifest missing {key!r}")
    series_list = []
    for entry in spec["series"]:
        for key in ("name", "path"):
            if key not in entry:
                raise DataError(f"{path}: series entry missing {key!r}: {entry}")
        series_list.append(read_series_csv(
            path.parent / entry["path"],
            name=entry["name"],
            frequency=entry.get("frequency", "daily"),
            transform=entry.get("transform", "level"),
        ))
    return series_list, spec["target"]


def write_panel_csv(panel: Panel, path: str | Path) -> None:
    """Standardized panel dump for audit: date, target, covariates."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", panel.target_name] + list(panel.covariate_names))
        for i, d in enumerate(panel.dates):
            writer.writerow([d.isoformat(), repr(float(panel.target[i]))]
                            + [repr(float(v)) for v in panel.features[i]])
