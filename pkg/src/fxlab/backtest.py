"""Friction-aware trading simulation on daily percent returns.

A strategy holds -1, 0, or +1 units of the target each day; the gross daily
return is signal times realized return (percentage points). Every position
change costs a fixed deduction (transaction cost plus slippage, in basis
points of notional, expressed as percentage points of that day's return).
Wealth compounds multiplicatively from 100.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError

TRADING_DAYS_PER_YEAR = 252


@dataclass(frozen=True)
class FrictionSpec:
    transaction_cost_bps: float = 5.0
    slippage_bps: float = 2.0

    def __post_init__(self):
        if self.transaction_cost_bps < 0 or self.slippage_bps < 0:
            raise ConfigError(
                f"frictions must be >= 0, got {self.transaction_cost_bps}, {self.slippage_bps}")

    @property
    def deduction_pct(self) -> float:
        """Percentage points deducted per position change: bps / 100."""
        return (self.transaction_cost_bps + self.slippage_bps) / 100.0


def signals_from_forecasts(forecasts: np.ndarray) -> np.ndarray:
    """Long on a positive forecast, short on a negative one, flat on zero."""
    return np.sign(np.asarray(forecasts, dtype=np.float64))


def random_walk_signals(returns: np.ndarray, prior_return: float | None = None) -> np.ndarray:
    """Follow yesterday's sign; the first day is flat unless a pre-sample
    return is supplied."""
    returns = np.asarray(returns, dtype=np.float64)
    first = 0.0 if prior_return is None else float(np.sign(prior_return))
    return np.concatenate([[first], np.sign(returns[:-1])])


def buy_and_hold_signals(n: int) -> np.ndarray:
    return np.ones(n)


def synthetic_price_path(returns: np.ndarray) -> np.ndarray:
    """Price level implied by compounding percent returns from 100."""
    returns = np.asarray(returns, dtype=np.float64)
    return 100.0 * np.cumprod(1.0 + returns / 100.0)


def ma_crossover_signals(returns: np.ndarray, fast: int = 20, slow: int = 50) -> np.ndarray:
    """Moving-average crossover on the synthetic price: long when the fast
    average is above the slow one, short below, flat until both exist and on
    exact ties."""
    if fast < 1 or slow < 1 or fast >= slow:
        raise ConfigError(f"need 1 <= fast < slow, got fast={fast}, slow={slow}")
    prices = synthetic_price_path(returns)
    n = len(prices)
    signals = np.zeros(n)
    cumsum = np.concatenate([[0.0], np.cumsum(prices)])
    for t in range(slow - 1, n):
        ma_fast = (cumsum[t + 1] - cumsum[t + 1 - fast]) / fast
        ma_slow = (cumsum[t + 1] - cumsum[t + 1 - slow]) / slow
        if ma_fast > ma_slow:
            signals[t] = 1.0
        elif ma_fast < ma_slow:
            signals[t] = -1.0
    return signals


def gross_returns(signals: np.ndarray, returns: np.ndarray) -> np.ndarray:
    signals = np.asarray(signals, dtype=np.float64)
    returns = np.asarray(returns, dtype=np.float64)
    if signals.shape != returns.shape:
        raise DataError(f"gross_returns: signals {signals.shape} vs returns {returns.shape}")
    return signals * returns


def trade_flags(signals: np.ndarray) -> np.ndarray:
    """1 on every day the position differs from the previous day; the
    strategy starts flat, so an initial nonzero signal is a trade."""
    signals = np.asarray(signals, dtype=np.float64)
    previous = np.concatenate([[0.0], signals[:-1]])
    return (signals != previous).astype(np.float64)


def apply_frictions(signals: np.ndarray, gross: np.ndarray, spec: FrictionSpec) -> np.ndarray:
    """Deduct the per-trade cost, in percentage points, on change days."""
    return gross - spec.deduction_pct * trade_flags(signals)


def wealth_path(daily_pct: np.ndarray) -> np.ndarray:
    """Compounded wealth starting at 100, one entry per day."""
    return 100.0 * np.cumprod(1.0 + np.asarray(daily_pct, dtype=np.float64) / 100.0)


def cumulative_return_pct(daily_pct: np.ndarray) -> float:
    """100 * (prod(1 + R_t/100) - 1)."""
    return float(100.0 * (np.prod(1.0 + np.asarray(daily_pct, dtype=np.float64) / 100.0) - 1.0))


def max_drawdown_pct(daily_pct: np.ndarray) -> float:
    """Largest peak-to-trough wealth loss as a percent of the peak.

    The pre-trading wealth of 100 counts as the first peak.
    """
    path = np.concatenate([[100.0], wealth_path(daily_pct)])
    peaks = np.maximum.accumulate(path)
    drawdowns = (peaks - path) / peaks
    return float(100.0 * drawdowns.max())


def sharpe_ratio(daily_pct: np.ndarray, periods: int = TRADING_DAYS_PER_YEAR) -> float:
    """Annualized mean over sample std; NaN when the deviation is zero."""
    r = np.asarray(daily_pct, dtype=np.float64)
    if len(r) < 2:
        raise DataError(f"sharpe_ratio needs >= 2 observations, got {len(r)}")
    sd = r.std(ddof=1)
    if sd == 0.0:
        return float("nan")
    return float(r.mean() / sd * math.sqrt(periods))


def sortino_ratio(daily_pct: np.ndarray, periods: int = TRADING_DAYS_PER_YEAR) -> float:
    """Annualized mean over downside deviation (root mean square of returns
    below zero). Zero downside means no negative day: +inf for a positive
    mean, NaN when every return is zero."""
    r = np.asarray(daily_pct, dtype=np.float64)
    if len(r) < 2:
        raise DataError(f"sortino_ratio needs >= 2 observations, got {len(r)}")
    downside = math.sqrt(float(np.mean(np.square(np.minimum(r, 0.0)))))
    mean = float(r.mean())
    if downside == 0.0:
        return float("inf") if mean > 0 else float("nan")
    return float(mean / downside * math.sqrt(periods))


@dataclass(frozen=True)
class StrategyResult:
    name: str
    signals: np.ndarray
    gross: np.ndarray
    net: np.ndarray
    trade_count: int
    mean_pct: float
    min_pct: float
    max_pct: float
    max_drawdown_pct: float
    sharpe: float
    sortino: float
    cumulative_return_pct: float
    gross_cumulative_return_pct: float
    total_deductions_pct: float


def evaluate_strategy(name: str, signals: np.ndarray, returns: np.ndarray,
                      spec: FrictionSpec) -> StrategyResult:
    gross = gross_returns(signals, returns)
    net = apply_frictions(signals, gross, spec)
    trades = int(trade_flags(signals).sum())
    return StrategyResult(
        name=name,
        signals=np.asarray(signals, dtype=np.float64),
        gross=gross,
        net=net,
        trade_count=trades,
        mean_pct=float(net.mean()),
        min_pct=float(net.min()),
        max_pct=float(net.max()),
        max_drawdown_pct=max_drawdown_pct(net),
        sharpe=sharpe_ratio(net),
        sortino=sortino_ratio(net),
        cumulative_return_pct=cumulative_return_pct(net),
        gross_cumulative_return_pct=cumulative_return_pct(gross),
        total_deductions_pct=spec.deduction_pct * trades,
    )


BENCHMARKS = ("rw", "bh", "ma")


def run_backtest(forecasts: np.ndarray, returns: np.ndarray, spec: FrictionSpec,
                 benchmarks: tuple[str, ...] = BENCHMARKS,
                 prior_return: float | None = None,
                 model_name: str = "model") -> dict[str, StrategyResult]:
    """Model strategy plus the requested benchmark strategies on one series."""
    returns = np.asarray(returns, dtype=np.float64)
    forecasts = np.asarray(forecasts, dtype=np.float64)
    if forecasts.shape != returns.shape:
        raise DataError(f"run_backtest: forecasts {forecasts.shape} vs returns {returns.shape}")
    if len(returns) < 2:
        raise DataError(f"run_backtest needs >= 2 days, got {len(returns)}")
    results = {model_name: evaluate_strategy(model_name, signals_from_forecasts(forecasts),
                                             returns, spec)}
    for bench in benchmarks:
        if bench == "rw":
            signals = random_walk_signals(returns, prior_return)
        elif bench == "bh":
            signals = buy_and_hold_signals(len(returns))
        elif bench == "ma":
            signals = ma_crossover_signals(returns)
        else:
            raise ConfigError(f"unknown benchmark {bench!r}, expected subset of {BENCHMARKS}")
        results[bench] = evaluate_strategy(bench, signals, returns, spec)
    return results


# ---------------------------------------------------------------------------
# market-regime partition

VOL_BUCKETS = ("low", "medium", "high")
TREND_BUCKETS = ("bull", "bear")


@dataclass(frozen=True)
class RegimePartition:
    """Per-day labels; None where the trailing window is not yet defined."""
    vol_labels: tuple
    trend_labels: tuple
    vol_thresholds: tuple[float, float]

    def counts(self) -> dict[str, int]:
        out = {}
        for label in VOL_BUCKETS + TREND_BUCKETS:
            out[label] = (self.vol_labels.count(label)
                          if label in VOL_BUCKETS else self.trend_labels.count(label))
        return out


def rolling_std(returns: np.ndarray, window: int) -> np.ndarray:
    """Trailing sample std over `window` days, NaN before it is defined."""
    r = np.asarray(returns, dtype=np.float64)
    out = np.full(len(r), np.nan)
    for t in range(window - 1, len(r)):
        out[t] = r[t - window + 1:t + 1].std(ddof=1)
    return out


def regime_partition(returns: np.ndarray, vol_window: int = 20, trend_window: int = 20,
                     thresholds: str = "full") -> RegimePartition:
    """Label days by volatility tercile and trend direction.

    Volatility: trailing rolling std, cut at its 33rd/66th percentiles over
    the evaluation period ("full") or over the values seen so far
    ("expanding"). Trend: bull when the trailing sum of returns is positive,
    bear otherwise.
    """
    if thresholds not in ("full", "expanding"):
        raise ConfigError(f"thresholds must be 'full' or 'expanding', got {thresholds!r}")
    r = np.asarray(returns, dtype=np.float64)
    if len(r) < max(vol_window, trend_window):
        raise DataError(
            f"regime partition needs >= {max(vol_window, trend_window)} days, got {len(r)}")
    vol = rolling_std(r, vol_window)
    defined = ~np.isnan(vol)
    if thresholds == "full":
        q33, q66 = np.percentile(vol[defined], [33.0, 66.0])
        cuts = [(q33, q66)] * len(r)
    else:
        cuts = []
        seen = []
        for t in range(len(r)):
            if defined[t]:
                seen.append(vol[t])
                cuts.append(tuple(np.percentile(seen, [33.0, 66.0])))
            else:
                cuts.append((np.nan, np.nan))
        q33, q66 = cuts[-1]

    vol_labels = []
    for t in range(len(r)):
        if not defined[t]:
            vol_labels.append(None)
        elif vol[t] <= cuts[t][0]:
            vol_labels.append("low")
        elif vol[t] <= cuts[t][1]:
            vol_labels.append("medium")
        else:
            vol_labels.append("high")

    trend_labels = []
    for t in range(len(r)):
        if t < trend_window - 1:
            trend_labels.append(None)
        else:
            total = float(r[t - trend_window + 1:t + 1].sum())
            trend_labels.append("bull" if total > 0 else "bear")

    return RegimePartition(vol_labels=tuple(vol_labels), trend_labels=tuple(trend_labels),
                           vol_thresholds=(float(q33), float(q66)))


@dataclass(frozen=True)
class RegimeAccuracyRow:
    dimension: str   # "volatility" or "trend"
    bucket: str
    n_days: int
    accuracy: dict   # strategy name -> hit rate


def stratified_accuracy(partition: RegimePartition,
                        hits: dict[str, np.ndarray]) -> list[RegimeAccuracyRow]:
    """Directional hit rates per regime bucket; empty buckets are omitted."""
    lengths = {len(v) for v in hits.values()}
    if lengths != {len(partition.vol_labels)}:
        raise DataError(
            f"stratified_accuracy: hit series lengths {sorted(lengths)} vs "
            f"{len(partition.vol_labels)} labeled days")
    rows = []
    for dimension, labels, buckets in (("volatility", partition.vol_labels, VOL_BUCKETS),
                                       ("trend", partition.trend_labels, TREND_BUCKETS)):
        arr = np.array([label if label is not None else "" for label in labels])
        for bucket in buckets:
            mask = arr == bucket
            if not mask.any():
                continue
            rows.append(RegimeAccuracyRow(
                dimension=dimension, bucket=bucket, n_days=int(mask.sum()),
                accuracy={name: float(h[mask].mean()) for name, h in hits.items()}))
    return rows
