"""Out-of-sample forecast scoring: squared-error ratios and one-sided tests.

The benchmark throughout is the driftless random walk, whose point forecast
for a return is zero. Clark-West adjusts the squared-error differential for
the noise a larger nested model adds; Blaskowitz-Herwartz applies the same
HAC-studentized mean test to directional-accuracy differentials. Both use the
Newey-West long-run variance with the Bartlett kernel.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericError


def normal_cdf_upper(t: float) -> float:
    """P(Z > t) for standard normal Z."""
    if math.isnan(t):
        return float("nan")
    if t == float("inf"):
        return 0.0
    if t == float("-inf"):
        return 1.0
    return 0.5 * math.erfc(t / math.sqrt(2.0))


def nw_bandwidth(n: int) -> int:
    """Rule-of-thumb Bartlett truncation lag: floor(4 * (n/100)^(2/9))."""
    if n < 1:
        raise DataError(f"bandwidth needs n >= 1, got {n}")
    return int(math.floor(4.0 * (n / 100.0) ** (2.0 / 9.0)))


def newey_west_lrv(x: np.ndarray, lag: int | None = None) -> float:
    """Bartlett-weighted long-run variance about the sample mean.

    lag=0 degenerates to the n-divisor sample variance. Estimates that come
    out negative are floored at zero.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or len(x) == 0:
        raise DataError(f"long-run variance needs a nonempty 1-D series, got shape {x.shape}")
    n = len(x)
    if lag is None:
        lag = nw_bandwidth(n)
    if lag < 0:
        raise DataError(f"lag must be >= 0, got {lag}")
    centered = x - x.mean()
    gamma0 = float(centered @ centered) / n
    lrv = gamma0
    for j in range(1, min(lag, n - 1) + 1):
        gamma_j = float(centered[j:] @ centered[:-j]) / n
        lrv += 2.0 * (1.0 - j / (lag + 1.0)) * gamma_j
    return max(lrv, 0.0)


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    n: int
    lag: int


def _studentized_mean_test(diff: np.ndarray, lag: int | None) -> TestResult:
    """One-sided (upper) HAC t-test of mean(diff) = 0.

    An identically-zero differential carries no evidence: t = 0, p = 0.5.
    A degenerate variance with a nonzero mean collapses to a sign verdict.
    """
    diff = np.asarray(diff, dtype=np.float64)
    n = len(diff)
    used_lag = nw_bandwidth(n) if lag is None else lag
    if np.all(diff == 0.0):
        return TestResult(0.0, 0.5, n, used_lag)
    mean = float(diff.mean())
    lrv = newey_west_lrv(diff, used_lag)
    if lrv == 0.0:
        stat = math.inf if mean > 0 else (-math.inf if mean < 0 else 0.0)
    else:
        stat = mean / math.sqrt(lrv / n)
    return TestResult(stat, normal_cdf_upper(stat), n, used_lag)


# ---------------------------------------------------------------------------
# squared-error metrics

def msfe(actual: np.ndarray, forecast: np.ndarray) -> float:
    actual = np.asarray(actual, dtype=np.float64)
    forecast = np.asarray(forecast, dtype=np.float64)
    if actual.shape != forecast.shape:
        raise DataError(f"msfe: actual {actual.shape} vs forecast {forecast.shape}")
    if actual.size == 0:
        raise DataError("msfe: empty series")
    return float(np.mean(np.square(actual - forecast)))


def msfe_ratio(actual: np.ndarray, model_forecast: np.ndarray,
               benchmark_forecast: np.ndarray | None = None) -> float:
    """100 * MSFE(model) / MSFE(benchmark); benchmark defaults to zero forecasts."""
    if benchmark_forecast is None:
        benchmark_forecast = np.zeros_like(np.asarray(actual, dtype=np.float64))
    bench = msfe(actual, benchmark_forecast)
    if bench == 0.0:
        raise NumericError("benchmark MSFE is zero; ratio undefined")
    return 100.0 * (msfe(actual, model_forecast) / bench)


def clark_west(actual: np.ndarray, model_forecast: np.ndarray,
               benchmark_forecast: np.ndarray | None = None,
               lag: int | None = None) -> TestResult:
    """Clark-West test of equal MSFE against a nested benchmark.

    f_t = (y - yhat_bench)^2 - [(y - yhat_model)^2 - (yhat_bench - yhat_model)^2],
    studentized with the Newey-West variance, one-sided upper p-value.
    """
    actual = np.asarray(actual, dtype=np.float64)
    model_forecast = np.asarray(model_forecast, dtype=np.float64)
    if benchmark_forecast is None:
        benchmark_forecast = np.zeros_like(actual)
    benchmark_forecast = np.asarray(benchmark_forecast, dtype=np.float64)
    if not (actual.shape == model_forecast.shape == benchmark_forecast.shape):
        raise DataError(
            f"clark_west: shapes differ {actual.shape}, {model_forecast.shape}, {benchmark_forecast.shape}")
    if actual.size == 0:
        raise DataError("clark_west: empty series")
    f = (np.square(actual - benchmark_forecast)
         - (np.square(actual - model_forecast) - np.square(benchmark_forecast - model_forecast)))
    return _studentized_mean_test(f, lag)


# ---------------------------------------------------------------------------
# direction metrics

def direction_hits(forecast: np.ndarray, actual: np.ndarray) -> np.ndarray:
    """1 when forecast and outcome agree in sign; the product convention
    scores a zero forecast or zero return as a hit."""
    forecast = np.asarray(forecast, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    if forecast.shape != actual.shape:
        raise DataError(f"direction_hits: {forecast.shape} vs {actual.shape}")
    return (forecast * actual >= 0.0).astype(np.float64)


def directional_accuracy(forecast: np.ndarray, actual: np.ndarray) -> float:
    hits = direction_hits(forecast, actual)
    if hits.size == 0:
        raise DataError("directional_accuracy: empty series")
    return float(hits.mean())


def sign_persistence_forecast(actual: np.ndarray, prior_return: float | None = None) -> np.ndarray:
    """Benchmark direction forecast: yesterday's return. First day falls back
    to the supplied pre-sample return, else to zero (scored as a hit)."""
    actual = np.asarray(actual, dtype=np.float64)
    if actual.size == 0:
        raise DataError("sign_persistence_forecast: empty series")
    first = 0.0 if prior_return is None else float(prior_return)
    return np.concatenate([[first], actual[:-1]])


def blaskowitz_herwartz(model_hits: np.ndarray, benchmark_hits: np.ndarray,
                        lag: int | None = None) -> TestResult:
    """HAC-studentized mean test on the accuracy differential, one-sided upper."""
    model_hits = np.asarray(model_hits, dtype=np.float64)
    benchmark_hits = np.asarray(benchmark_hits, dtype=np.float64)
    if model_hits.shape != benchmark_hits.shape:
        raise DataError(f"blaskowitz_herwartz: {model_hits.shape} vs {benchmark_hits.shape}")
    if model_hits.size == 0:
        raise DataError("blaskowitz_herwartz: empty series")
    return _studentized_mean_test(model_hits - benchmark_hits, lag)


@dataclass(frozen=True)
class EvaluationRow:
    """One results line: squared-error ratio plus both one-sided tests."""
    target: str
    model: str
    window: int
    msfe_ratio: float
    cw_t: float
    cw_p: float
    da: float
    bh_t: float
    bh_p: float


def evaluate_forecasts(target: str, model: str, window: int, actual: np.ndarray,
                       model_forecast: np.ndarray, prior_return: float | None = None,
                       lag: int | None = None) -> EvaluationRow:
    """Score one forecast series against the random-walk benchmarks."""
    cw = clark_west(actual, model_forecast, lag=lag)
    bench = sign_persistence_forecast(actual, prior_return)
    bh = blaskowitz_herwartz(direction_hits(model_forecast, actual),
                             direction_hits(bench, actual), lag=lag)
    return EvaluationRow(
        target=target, model=model, window=window,
        msfe_ratio=msfe_ratio(actual, model_forecast),
        cw_t=cw.statistic, cw_p=cw.p_value,
        da=directional_accuracy(model_forecast, actual),
        bh_t=bh.statistic, bh_p=bh.p_value,
    )
