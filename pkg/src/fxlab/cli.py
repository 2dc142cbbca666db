"""Command line for the forecasting laboratory.

Subcommands cover the full loop: generate synthetic data, train, score the
held-out forecasts, run the friction-aware backtest, retrain every ablation,
and export variable importance. Every run writes a run_manifest.json naming
its inputs and outputs, and every CSV is byte-stable across reruns with the
same inputs.

Exit codes: 0 success, 2 configuration problems, 3 data problems, 4 numeric
failures during training or scoring, 1 anything else.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .backtest import (
    BENCHMARKS,
    StrategyResult,
    regime_partition,
    run_backtest,
    stratified_accuracy,
    wealth_path,
)
from .config import RunConfig, load_config
from .data import Panel, build_panel, gather_windows, load_manifest, write_panel_csv
from .errors import ConfigError, DataError, NumericError, TrainingError
from .evaluation import (
    direction_hits,
    evaluate_forecasts,
    sign_persistence_forecast,
)
from .importance import (
    REDUCERS,
    importance_matrix,
    write_global_importance_csv,
    write_importance_matrix_csv,
)
from .model import (
    ABLATIONS,
    ModelConfig,
    init_params,
    load_checkpoint,
    model_forward,
    parameter_count,
    predict,
    save_checkpoint,
)
from .synthetic import generate_files
from .train import train_model, write_training_log

INJECT_MODES = ("zero", "perfect")

RESULTS_HEADER = ("pair", "model", "window", "msfe_ratio",
                  "cw_t", "cw_p", "da", "bh_t", "bh_p")
REGIME_HEADER = ("dimension", "bucket", "n_days", "da_model", "da_rw")
BACKTEST_HEADER = ("strategy", "trades", "cumulative_return_pct",
                   "gross_cumulative_return_pct", "mean_daily_pct",
                   "max_drawdown_pct", "sharpe", "sortino", "total_deductions_pct")
ABLATION_HEADER = ("variant", "window", "param_count", "msfe_ratio", "da", "bh_t", "bh_p")


# ---------------------------------------------------------------------------
# shared plumbing

def _cell(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return value


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def _run_config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    return cfg.with_overrides(
        seed=getattr(args, "seed", None),
        window=getattr(args, "window", None),
        out_dir=getattr(args, "out_dir", None),
        variant=getattr(args, "variant", None),
        transaction_cost_bps=getattr(args, "friction_bps", None),
        slippage_bps=getattr(args, "slippage_bps", None),
    )


def _manifest_path(args, cfg: RunConfig) -> str:
    path = getattr(args, "manifest", None) or cfg.manifest
    if path is None:
        raise ConfigError("no data manifest given; pass --manifest or set [data].manifest")
    return path


def _load_panel(manifest_path: str) -> Panel:
    series, target = load_manifest(manifest_path)
    return build_panel(series, target)


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_run_manifest(out: Path, command: str, cfg: RunConfig, manifest_path,
                        outputs, extra: dict | None = None) -> None:
    doc = {
        "command": command,
        "seed": cfg.seed,
        "window": cfg.window,
        "variant": cfg.variant,
        "data_manifest": str(manifest_path) if manifest_path else None,
        "out_dir": cfg.out_dir,
        "model_overrides": dict(cfg.model_kwargs),
        "train": dataclasses.asdict(cfg.train),
        "frictions": dataclasses.asdict(cfg.frictions),
        "benchmarks": list(cfg.benchmarks),
        "outputs": sorted(str(o) for o in outputs),
    }
    if extra:
        doc.update(extra)
    path = out / "run_manifest.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _resolve_model(args, cfg: RunConfig, panel: Panel):
    """Checkpointed model, or an injected diagnostic forecaster.

    Returns (label, window, forecast_fn) where forecast_fn maps the realized
    test returns and window batch to the forecast array.
    """
    inject = getattr(args, "inject", None)
    if inject is not None:
        if getattr(args, "checkpoint", None):
            raise ConfigError("--inject replaces the model; drop --checkpoint")
        label = f"inject-{inject}"
        if inject == "zero":
            return label, cfg.window, lambda realized, batch: np.zeros_like(realized)
        return label, cfg.window, lambda realized, batch: realized.copy()

    ckpt = getattr(args, "checkpoint", None) or str(Path(cfg.out_dir) / "checkpoint.npz")
    store, mcfg, meta = load_checkpoint(ckpt)
    if getattr(args, "window", None) is not None and args.window != mcfg.window:
        raise ConfigError(
            f"--window {args.window} conflicts with the checkpoint window {mcfg.window}; "
            "the checkpoint fixes the window")
    if mcfg.n_covariates != panel.n_covariates:
        raise ConfigError(
            f"checkpoint expects {mcfg.n_covariates} covariates, data has {panel.n_covariates}")
    label = meta.get("variant", mcfg.variant_name())

    def forecast_fn(realized, batch):
        preds = predict(store, mcfg, batch.inputs)
        return panel.standardizer.invert_target(preds)

    return label, mcfg.window, forecast_fn


def _test_slice(panel: Panel, window: int):
    batch = gather_windows(panel, window, "test")
    realized = panel.target_raw[batch.rows]
    dates = [panel.dates[i] for i in batch.rows]
    prior = float(panel.target_raw[batch.rows[0] - 1])
    return batch, realized, dates, prior


# ---------------------------------------------------------------------------
# subcommands

def cmd_train(args) -> None:
    cfg = _run_config(args)
    manifest_path = _manifest_path(args, cfg)
    panel = _load_panel(manifest_path)
    mcfg = cfg.model_config(panel.n_covariates)
    store = init_params(mcfg, np.random.default_rng(cfg.seed))
    report = train_model(store, mcfg, panel, cfg.train)

    out = _out_dir(cfg)
    save_checkpoint(out / "checkpoint.npz", store, mcfg, meta={
        "seed": cfg.seed,
        "variant": cfg.variant,
        "target": panel.target_name,
        "covariates": list(panel.covariate_names),
        "best_epoch": report.best_epoch + 1,
        "best_val_mse": report.best_val_mse,
    })
    write_training_log(report, out / "training_log.csv")
    write_panel_csv(panel, out / "panel.csv")
    outputs = ["checkpoint.npz", "training_log.csv", "panel.csv", "run_manifest.json"]
    _write_run_manifest(out, "train", cfg, manifest_path, outputs,
                        extra={"param_count": parameter_count(mcfg)})
    print(f"trained {cfg.variant}: {report.epochs_run} epochs"
          f"{' (stopped early)' if report.stopped_early else ''}, "
          f"best val mse {report.best_val_mse:.6f} at epoch {report.best_epoch + 1}")
    print(f"wrote {out / 'checkpoint.npz'}")


def cmd_evaluate(args) -> None:
    cfg = _run_config(args)
    manifest_path = _manifest_path(args, cfg)
    panel = _load_panel(manifest_path)
    label, window, forecast_fn = _resolve_model(args, cfg, panel)
    batch, realized, dates, prior = _test_slice(panel, window)
    forecasts = forecast_fn(realized, batch)

    row = evaluate_forecasts(panel.target_name, label, window, realized, forecasts,
                             prior_return=prior)
    hits = {
        "model": direction_hits(forecasts, realized),
        "rw": direction_hits(sign_persistence_forecast(realized, prior), realized),
    }
    try:
        regime_rows = stratified_accuracy(regime_partition(realized), hits)
    except DataError:
        # test period shorter than the trailing volatility window: no day can
        # be labeled, so the stratified file is just the header
        regime_rows = []

    out = _out_dir(cfg)
    _write_csv(out / "results.csv", RESULTS_HEADER,
               [(row.target, row.model, row.window, row.msfe_ratio,
                 row.cw_t, row.cw_p, row.da, row.bh_t, row.bh_p)])
    _write_csv(out / "regime_da.csv", REGIME_HEADER,
               [(r.dimension, r.bucket, r.n_days, r.accuracy["model"], r.accuracy["rw"])
                for r in regime_rows])
    outputs = ["results.csv", "regime_da.csv", "run_manifest.json"]
    _write_run_manifest(out, "evaluate", cfg, manifest_path, outputs,
                        extra={"window": window, "model_label": label,
                               "inject": getattr(args, "inject", None),
                               "test_days": len(realized)})
    print(f"{row.target} {label} T={window}: msfe_ratio {row.msfe_ratio:.3f}, "
          f"cw_p {row.cw_p:.4f}, da {row.da:.4f}, bh_p {row.bh_p:.4f} "
          f"({len(realized)} test days)")
    print(f"wrote {out / 'results.csv'}")


def cmd_backtest(args) -> None:
    cfg = _run_config(args)
    manifest_path = _manifest_path(args, cfg)
    panel = _load_panel(manifest_path)
    label, window, forecast_fn = _resolve_model(args, cfg, panel)
    batch, realized, dates, prior = _test_slice(panel, window)
    forecasts = forecast_fn(realized, batch)

    results = run_backtest(forecasts, realized, cfg.frictions,
                           benchmarks=cfg.benchmarks, prior_return=prior,
                           model_name="model")
    out = _out_dir(cfg)
    report_rows = []
    outputs = ["backtest_report.csv", "run_manifest.json"]
    for name, res in results.items():
        report_rows.append((res.name, res.trade_count, res.cumulative_return_pct,
                            res.gross_cumulative_return_pct, res.mean_pct,
                            res.max_drawdown_pct, res.sharpe, res.sortino,
                            res.total_deductions_pct))
        ledger_name = f"ledger_{name}.csv"
        _write_ledger(out / ledger_name, dates, res)
        outputs.append(ledger_name)
    _write_csv(out / "backtest_report.csv", BACKTEST_HEADER, report_rows)
    _write_run_manifest(out, "backtest", cfg, manifest_path, outputs,
                        extra={"window": window, "model_label": label,
                               "inject": getattr(args, "inject", None),
                               "test_days": len(realized)})
    model_res = results["model"]
    print(f"{panel.target_name} {label} T={window}: net cumulative "
          f"{model_res.cumulative_return_pct:.3f}% over {len(realized)} days, "
          f"{model_res.trade_count} trades, sharpe {model_res.sharpe:.3f}")
    print(f"wrote {out / 'backtest_report.csv'}")


def _write_ledger(path, dates, res: StrategyResult) -> None:
    wealth = wealth_path(res.net)
    rows = [(d.isoformat(), int(s), g, n, w)
            for d, s, g, n, w in zip(dates, res.signals, res.gross, res.net, wealth)]
    _write_csv(path, ("date", "signal", "gross_pct", "net_pct", "wealth"), rows)


def cmd_ablate(args) -> None:
    cfg = _run_config(args)
    manifest_path = _manifest_path(args, cfg)
    panel = _load_panel(manifest_path)
    out = _out_dir(cfg)

    rows = []
    outputs = ["ablation_report.csv", "run_manifest.json"]
    for variant in ABLATIONS:
        vcfg = cfg.with_overrides(variant=variant)
        mcfg = vcfg.model_config(panel.n_covariates)
        store = init_params(mcfg, np.random.default_rng(cfg.seed))
        train_model(store, mcfg, panel, cfg.train)
        batch, realized, dates, prior = _test_slice(panel, mcfg.window)
        forecasts = panel.standardizer.invert_target(predict(store, mcfg, batch.inputs))
        row = evaluate_forecasts(panel.target_name, variant, mcfg.window,
                                 realized, forecasts, prior_return=prior)
        rows.append((variant, mcfg.window, parameter_count(mcfg),
                     row.msfe_ratio, row.da, row.bh_t, row.bh_p))
        ckpt_name = f"checkpoint_{variant}.npz"
        save_checkpoint(out / ckpt_name, store, mcfg,
                        meta={"seed": cfg.seed, "variant": variant,
                              "target": panel.target_name})
        outputs.append(ckpt_name)
        print(f"{variant}: {parameter_count(mcfg)} params, da {row.da:.4f}, "
              f"msfe_ratio {row.msfe_ratio:.3f}")
    _write_csv(out / "ablation_report.csv", ABLATION_HEADER, rows)
    _write_run_manifest(out, "ablate", cfg, manifest_path, outputs)
    print(f"wrote {out / 'ablation_report.csv'}")


def cmd_explain(args) -> None:
    cfg = _run_config(args)
    manifest_path = _manifest_path(args, cfg)
    panel = _load_panel(manifest_path)
    ckpt = getattr(args, "checkpoint", None) or str(Path(cfg.out_dir) / "checkpoint.npz")
    store, mcfg, meta = load_checkpoint(ckpt)
    if mcfg.n_covariates != panel.n_covariates:
        raise ConfigError(
            f"checkpoint expects {mcfg.n_covariates} covariates, data has {panel.n_covariates}")
    label = meta.get("variant", mcfg.variant_name())
    batch = gather_windows(panel, mcfg.window, args.subset)
    result = model_forward(store, mcfg, batch.inputs, training=False)
    dates = [panel.dates[i] for i in batch.rows]
    matrix = importance_matrix(result.omega, dates, panel.covariate_names,
                               reduce=args.reduce)
    out = _out_dir(cfg)
    write_global_importance_csv(matrix, out / "global_importance.csv")
    write_importance_matrix_csv(matrix, out / "importance_matrix.csv")
    outputs = ["global_importance.csv", "importance_matrix.csv", "run_manifest.json"]
    _write_run_manifest(out, "explain", cfg, manifest_path, outputs,
                        extra={"window": mcfg.window, "model_label": label,
                               "subset": args.subset, "reduce": args.reduce})
    top = max(zip(matrix.weights.mean(axis=0), matrix.names))
    print(f"{label} on {args.subset}: top covariate {top[1]} "
          f"at {100.0 * top[0]:.2f}% of selection weight")
    print(f"wrote {out / 'global_importance.csv'}")


def cmd_synth_data(args) -> None:
    if args.signal_coefs is None:
        # one planted driver, the rest pure distractors
        coefs = (0.8,) + (0.0,) * (args.n_covariates - 1)
    else:
        coefs = tuple(float(c) for c in args.signal_coefs.split(","))
    path = generate_files(args.out_dir, n=args.n, n_covariates=args.n_covariates,
                          signal_coefs=coefs, noise_std=args.noise_std,
                          seed=args.seed, ar_coef=args.ar_coef)
    print(f"wrote {path}")


# ---------------------------------------------------------------------------
# argument parsing

def _add_common(p, *, window=True, data=True, frictions=False,
                checkpoint=False, inject=False):
    p.add_argument("--config", help="TOML run file")
    p.add_argument("--seed", type=int, help="run seed (overrides [run].seed)")
    p.add_argument("--out-dir", dest="out_dir", help="output directory")
    if window:
        p.add_argument("--window", type=int, help="lookback length T")
    if data:
        p.add_argument("--manifest", help="data manifest JSON")
    if frictions:
        p.add_argument("--friction-bps", dest="friction_bps", type=float,
                       help="one-way transaction cost, basis points")
        p.add_argument("--slippage-bps", dest="slippage_bps", type=float,
                       help="slippage per position change, basis points")
    if checkpoint:
        p.add_argument("--checkpoint", help="model checkpoint (default: OUT_DIR/checkpoint.npz)")
    if inject:
        p.add_argument("--inject", choices=INJECT_MODES,
                       help="replace the model with a diagnostic forecaster")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fxlab",
        description="Train, score, backtest and explain daily return forecasters.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a model and write a checkpoint")
    _add_common(p)
    p.add_argument("--variant", choices=ABLATIONS, help="ablation variant to train")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score held-out forecasts")
    _add_common(p, checkpoint=True, inject=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("backtest", help="friction-aware trading simulation")
    _add_common(p, frictions=True, checkpoint=True, inject=True)
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("ablate", help="retrain every ablation variant")
    _add_common(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("explain", help="export variable-importance weights")
    _add_common(p, checkpoint=True)
    p.add_argument("--subset", choices=("train", "val", "test"), default="test")
    p.add_argument("--reduce", choices=REDUCERS, default="mean")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("synth-data", help="generate a synthetic data folder")
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--n-covariates", dest="n_covariates", type=int, default=4)
    p.add_argument("--signal-coefs", dest="signal_coefs",
                   help="comma list, one weight per covariate (default: 0.8 on x1 only)")
    p.add_argument("--noise-std", dest="noise_std", type=float, default=0.1)
    p.add_argument("--ar-coef", dest="ar_coef", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_synth_data)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ConfigError as exc:
        return _fail(2, exc)
    except DataError as exc:
        return _fail(3, exc)
    except (NumericError, TrainingError) as exc:
        return _fail(4, exc)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        return _fail(1, exc)
    return 0


def _fail(code: int, exc: Exception) -> int:
    print(f"error: {exc}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
