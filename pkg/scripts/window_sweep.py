#!/usr/bin/env python3
"""Sweep the lookback window and compare held-out forecast quality.

Trains one model per window on the same data and prints a comparison table;
also writes sweep.csv next to the per-window run folders.
"""
import argparse
import csv
from pathlib import Path

import numpy as np

from fxlab import (
    TrainConfig,
    build_panel,
    evaluate_forecasts,
    gather_windows,
    init_params,
    load_manifest,
    predict,
    train_model,
)
from fxlab.config import RunConfig
from fxlab.synthetic import generate_files


def score_window(panel, window, seed, epochs):
    cfg = RunConfig(window=window,
                    train=TrainConfig(learning_rate=0.002, batch_size=64,
                                      max_epochs=epochs, patience=epochs, seed=seed))
    mcfg = cfg.model_config(panel.n_covariates)
    store = init_params(mcfg, np.random.default_rng(seed))
    report = train_model(store, mcfg, panel, cfg.train)

    batch = gather_windows(panel, window, "test")
    forecasts = panel.standardizer.invert_target(predict(store, mcfg, batch.inputs))
    realized = panel.target_raw[batch.rows]
    prior = float(panel.target_raw[batch.rows[0] - 1])
    row = evaluate_forecasts(panel.target_name, f"T={window}", window,
                             realized, forecasts, prior_return=prior)
    return row, report


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--manifest", help="data manifest; omit to generate synthetic data")
    parser.add_argument("--workdir", default="runs/sweep")
    parser.add_argument("--windows", default="5,10,15,20,30")
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--epochs", type=int, default=40)
    args = parser.parse_args()

    work = Path(args.workdir)
    work.mkdir(parents=True, exist_ok=True)
    manifest = args.manifest
    if manifest is None:
        manifest = generate_files(work / "data", n=1000, n_covariates=4,
                                  signal_coefs=(0.8, 0.0, 0.0, 0.0),
                                  noise_std=0.1, seed=args.seed)
    series, target = load_manifest(manifest)
    panel = build_panel(series, target)

    windows = [int(w) for w in args.windows.split(",")]
    print(f"{'window':>6} {'msfe_ratio':>10} {'cw_p':>8} {'da':>7} {'bh_p':>8} {'epochs':>7}")
    rows = []
    for window in windows:
        row, report = score_window(panel, window, args.seed, args.epochs)
        rows.append((window, row.msfe_ratio, row.cw_p, row.da, row.bh_p, report.epochs_run))
        print(f"{window:>6} {row.msfe_ratio:>10.3f} {row.cw_p:>8.4f} "
              f"{row.da:>7.4f} {row.bh_p:>8.4f} {report.epochs_run:>7}")

    with open(work / "sweep.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["window", "msfe_ratio", "cw_p", "da", "bh_p", "epochs"])
        for r in rows:
            writer.writerow([r[0]] + [repr(float(v)) for v in r[1:5]] + [r[5]])
    print(f"\nwrote {work / 'sweep.csv'}")


if __name__ == "__main__":
    main()
