"""Run configuration: TOML files plus command-line overrides.

A run file groups settings into [run], [data], [model], [train] and
[backtest] tables. Every key is optional, unknown keys are rejected so a
typo cannot silently fall back to a default.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from .backtest import BENCHMARKS, FrictionSpec
from .errors import ConfigError
from .model import ABLATIONS, ModelConfig, ablation_config
from .train import TrainConfig

_RUN_KEYS = {"seed": int, "window": int, "out_dir": str, "variant": str}
_DATA_KEYS = {"manifest": str}
_MODEL_KEYS = {
    "heads": int,
    "factor": int,
    "embed_dim": int,
    "kernel_sizes": list,
    "se_reduction": int,
    "dropout": float,
    "use_dvs": bool,
    "use_msc": bool,
    "use_se": bool,
    "trend_attention": bool,
    "qk_conv": str,
    "ffn_dropout": bool,
}
_TRAIN_KEYS = {
    "learning_rate": float,
    "batch_size": int,
    "max_epochs": int,
    "patience": int,
    "min_delta": float,
    "clip_norm": float,
}
_BACKTEST_KEYS = {
    "transaction_cost_bps": float,
    "slippage_bps": float,
    "benchmarks": list,
}
_SECTIONS = {
    "run": _RUN_KEYS,
    "data": _DATA_KEYS,
    "model": _MODEL_KEYS,
    "train": _TRAIN_KEYS,
    "backtest": _BACKTEST_KEYS,
}


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs except the covariate count, which comes from data."""
    manifest: str | None = None
    out_dir: str = "runs/latest"
    seed: int = 0
    window: int = 15
    variant: str = "full"
    model_kwargs: tuple[tuple[str, object], ...] = ()
    train: TrainConfig = TrainConfig()
    frictions: FrictionSpec = FrictionSpec()
    benchmarks: tuple[str, ...] = BENCHMARKS

    def __post_init__(self):
        if self.variant not in ABLATIONS:
            raise ConfigError(f"variant must be one of {ABLATIONS}, got {self.variant!r}")
        for name in self.benchmarks:
            if name not in BENCHMARKS:
                raise ConfigError(f"unknown benchmark {name!r}, expected one of {BENCHMARKS}")

    def model_config(self, n_covariates: int) -> ModelConfig:
        base = ModelConfig(n_covariates=n_covariates, window=self.window,
                           **dict(self.model_kwargs))
        return ablation_config(base, self.variant)

    def with_overrides(self, *, seed=None, window=None, out_dir=None, variant=None,
                       transaction_cost_bps=None, slippage_bps=None) -> "RunConfig":
        cfg = self
        if seed is not None:
            cfg = dataclasses.replace(cfg, seed=seed,
                                      train=dataclasses.replace(cfg.train, seed=seed))
        if window is not None:
            cfg = dataclasses.replace(cfg, window=window)
        if out_dir is not None:
            cfg = dataclasses.replace(cfg, out_dir=out_dir)
        if variant is not None:
            cfg = dataclasses.replace(cfg, variant=variant)
        if transaction_cost_bps is not None or slippage_bps is not None:
            fr = cfg.frictions
            cfg = dataclasses.replace(cfg, frictions=FrictionSpec(
                transaction_cost_bps=fr.transaction_cost_bps if transaction_cost_bps is None else transaction_cost_bps,
                slippage_bps=fr.slippage_bps if slippage_bps is None else slippage_bps))
        return cfg


def _checked(section: str, table: dict, allowed: dict) -> dict:
    out = {}
    for key, value in table.items():
        if key not in allowed:
            raise ConfigError(f"unknown key [{section}].{key}; allowed: {sorted(allowed)}")
        want = allowed[key]
        if want is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if want is int and isinstance(value, bool):
            raise ConfigError(f"[{section}].{key} must be an integer, got a boolean")
        if not isinstance(value, want):
            raise ConfigError(
                f"[{section}].{key} must be {want.__name__}, got {type(value).__name__}")
        out[key] = value
    return out


def parse_config(text_or_bytes) -> RunConfig:
    data = text_or_bytes.encode() if isinstance(text_or_bytes, str) else text_or_bytes
    try:
        doc = tomllib.loads(data.decode())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"bad TOML: {exc}") from exc
    for section in doc:
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]; allowed: {sorted(_SECTIONS)}")
        if not isinstance(doc[section], dict):
            raise ConfigError(f"[{section}] must be a table")

    run = _checked("run", doc.get("run", {}), _RUN_KEYS)
    datatable = _checked("data", doc.get("data", {}), _DATA_KEYS)
    model = _checked("model", doc.get("model", {}), _MODEL_KEYS)
    train = _checked("train", doc.get("train", {}), _TRAIN_KEYS)
    backtest = _checked("backtest", doc.get("backtest", {}), _BACKTEST_KEYS)

    if "kernel_sizes" in model:
        ks = model["kernel_sizes"]
        if len(ks) != 3 or not all(isinstance(k, int) and not isinstance(k, bool) for k in ks):
            raise ConfigError(f"[model].kernel_sizes must be three integers, got {ks}")
        model["kernel_sizes"] = tuple(ks)
    if "benchmarks" in backtest:
        bench = backtest["benchmarks"]
        if not all(isinstance(b, str) for b in bench):
            raise ConfigError(f"[backtest].benchmarks must be strings, got {bench}")
        backtest["benchmarks"] = tuple(bench)

    seed = run.get("seed", 0)
    return RunConfig(
        manifest=datatable.get("manifest"),
        out_dir=run.get("out_dir", "runs/latest"),
        seed=seed,
        window=run.get("window", 15),
        variant=run.get("variant", "full"),
        model_kwargs=tuple(sorted(model.items())),
        train=TrainConfig(seed=seed, **train),
        frictions=FrictionSpec(
            transaction_cost_bps=backtest.get("transaction_cost_bps", 5.0),
            slippage_bps=backtest.get("slippage_bps", 2.0)),
        benchmarks=backtest.get("benchmarks", BENCHMARKS),
    )


def load_config(path) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(raw)
