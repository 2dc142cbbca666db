import csv
import json

import numpy as np
import pytest

from fxlab.cli import main
from fxlab.model import load_checkpoint

TRAIN_TOML = """
[run]
seed = 3
window = 6

[model]
heads = 1
factor = 8
kernel_sizes = [2, 3, 4]
dropout = 0.1

[train]
learning_rate = 0.002
batch_size = 32
max_epochs = 2
patience = 2
"""


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_data")
    code = main(["synth-data", "--out-dir", str(root), "--n", "240",
                 "--n-covariates", "2", "--signal-coefs", "0.8,0.0", "--seed", "11"])
    assert code == 0
    return root


@pytest.fixture(scope="module")
def trained_dir(tmp_path_factory, data_dir):
    out = tmp_path_factory.mktemp("cli_run")
    cfg = out / "run.toml"
    cfg.write_text(TRAIN_TOML)
    code = main(["train", "--config", str(cfg),
                 "--manifest", str(data_dir / "manifest.json"),
                 "--out-dir", str(out)])
    assert code == 0
    return out


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_synth_data_writes_manifest(data_dir):
    manifest = json.loads((data_dir / "manifest.json").read_text())
    assert manifest["target"] == "fx"
    assert len(manifest["series"]) == 3  # target + 2 covariates
    assert manifest["generator"]["seed"] == 11


def test_train_outputs(trained_dir):
    assert (trained_dir / "checkpoint.npz").exists()
    store, mcfg, meta = load_checkpoint(trained_dir / "checkpoint.npz")
    assert mcfg.window == 6
    assert mcfg.n_covariates == 3  # target's own returns plus x1, x2
    assert meta["seed"] == 3
    assert meta["variant"] == "full"

    log = read_csv(trained_dir / "training_log.csv")
    assert log[0] == ["epoch", "train_mse", "val_mse"]
    assert len(log) == 3  # header + 2 epochs

    run = json.loads((trained_dir / "run_manifest.json").read_text())
    assert run["command"] == "train"
    assert run["seed"] == 3
    assert "checkpoint.npz" in run["outputs"]
    assert "timestamp" not in json.dumps(run)


def test_evaluate_outputs(trained_dir, data_dir):
    code = main(["evaluate", "--checkpoint", str(trained_dir / "checkpoint.npz"),
                 "--manifest", str(data_dir / "manifest.json"),
                 "--out-dir", str(trained_dir)])
    assert code == 0
    rows = read_csv(trained_dir / "results.csv")
    assert rows[0] == ["pair", "model", "window", "msfe_ratio",
                       "cw_t", "cw_p", "da", "bh_t", "bh_p"]
    assert rows[1][0] == "fx"
    assert rows[1][1] == "full"
    assert rows[1][2] == "6"
    assert 0.0 <= float(rows[1][6]) <= 1.0  # da is a rate

    regime = read_csv(trained_dir / "regime_da.csv")
    assert regime[0] == ["dimension", "bucket", "n_days", "da_model", "da_rw"]
    assert any(r[0] == "trend" for r in regime[1:])


def test_evaluate_inject_zero_hits_benchmark_identities(data_dir, tmp_path):
    out = tmp_path / "inject"
    code = main(["evaluate", "--inject", "zero", "--window", "6",
                 "--manifest", str(data_dir / "manifest.json"),
                 "--out-dir", str(out)])
    assert code == 0
    rows = read_csv(out / "results.csv")
    header, row = rows[0], rows[1]
    rec = dict(zip(header, row))
    assert rec["model"] == "inject-zero"
    # a zero forecast IS the squared-error benchmark
    assert float(rec["msfe_ratio"]) == 100.0
    assert float(rec["cw_t"]) == 0.0
    assert float(rec["cw_p"]) == 0.5


def test_evaluate_inject_perfect_dominates(data_dir, tmp_path):
    out = tmp_path / "perfect"
    code = main(["evaluate", "--inject", "perfect", "--window", "6",
                 "--manifest", str(data_dir / "manifest.json"),
                 "--out-dir", str(out)])
    assert code == 0
    rec = dict(zip(*read_csv(out / "results.csv")))
    assert float(rec["msfe_ratio"]) == 0.0
    assert float(rec["da"]) == 1.0
    assert float(rec["cw_p"]) < 0.01


def test_backtest_outputs_and_friction_override(trained_dir, data_dir, tmp_path):
    out = tmp_path / "bt"
    code = main(["backtest", "--checkpoint", str(trained_dir / "checkpoint.npz"),
                 "--manifest", str(data_dir / "manifest.json"),
                 "--out-dir", str(out)])
    assert code == 0
    rows = read_csv(out / "backtest_report.csv")
    assert rows[0][0] == "strategy"
    names = [r[0] for r in rows[1:]]
    assert names == ["model", "rw", "bh", "ma"]
    bh = dict(zip(rows[0], rows[names.index("bh") + 1]))
    assert bh["trades"] == "1"
    # deductions follow the 7 bps default: 0.07 percentage points per trade
    assert float(bh["total_deductions_pct"]) == pytest.approx(0.07)

    ledger = read_csv(out / "ledger_model.csv")
    assert ledger[0] == ["date", "signal", "gross_pct", "net_pct", "wealth"]
    assert len(ledger) == len(read_csv(out / "ledger_bh.csv"))

    # frictionless override zeroes every deduction
    out2 = tmp_path / "bt0"
    code = main(["backtest", "--checkpoint", str(trained_dir / "checkpoint.npz"),
                 "--manifest", str(data_dir / "manifest.json"),
                 "--out-dir", str(out2),
                 "--friction-bps", "0", "--slippage-bps", "0"])
    assert code == 0
    for row in read_csv(out2 / "backtest_report.csv")[1:]:
        rec = dict(zip(rows[0], row))
        assert float(rec["total_deductions_pct"]) == 0.0
        assert float(rec["cumulative_return_pct"]) == float(rec["gross_cumulative_return_pct"])


def test_explain_outputs(trained_dir, data_dir, tmp_path):
    out = tmp_path / "imp"
    code = main(["explain", "--checkpoint", str(trained_dir / "checkpoint.npz"),
                 "--manifest", str(data_dir / "manifest.json"),
                 "--out-dir", str(out)])
    assert code == 0
    rows = read_csv(out / "global_importance.csv")
    assert rows[0] == ["covariate", "importance_pct"]
    assert {r[0] for r in rows[1:]} == {"fx", "x1", "x2"}
    assert sum(float(r[1]) for r in rows[1:]) == pytest.approx(100.0)

    matrix = read_csv(out / "importance_matrix.csv")
    assert matrix[0] == ["date", "fx", "x1", "x2"]
    for row in matrix[1:]:
        assert sum(float(v) for v in row[1:]) == pytest.approx(1.0)


def test_rerun_is_byte_identical(trained_dir, data_dir, tmp_path):
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    argv = ["evaluate", "--checkpoint", str(trained_dir / "checkpoint.npz"),
            "--manifest", str(data_dir / "manifest.json")]
    assert main(argv + ["--out-dir", str(out1)]) == 0
    assert main(argv + ["--out-dir", str(out2)]) == 0
    for name in ("results.csv", "regime_da.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_exit_codes(tmp_path, data_dir, capsys):
    # 2: config problems
    assert main(["train", "--manifest", str(data_dir / "manifest.json"),
                 "--out-dir", str(tmp_path / "x"), "--config",
                 str(tmp_path / "missing.toml")]) == 2
    assert main(["evaluate", "--inject", "zero", "--checkpoint", "whatever.npz",
                 "--manifest", str(data_dir / "manifest.json"),
                 "--out-dir", str(tmp_path / "x")]) == 2
    assert main(["evaluate", "--checkpoint", str(tmp_path / "nope.npz"),
                 "--manifest", str(data_dir / "manifest.json"),
                 "--out-dir", str(tmp_path / "x")]) == 2
    # missing manifest argument entirely
    assert main(["train", "--out-dir", str(tmp_path / "x")]) == 2
    # 3: data problems
    assert main(["train", "--manifest", str(tmp_path / "nodata.json"),
                 "--out-dir", str(tmp_path / "x")]) == 3
    err = capsys.readouterr().err
    assert err.count("error:") == 5  # one line per failure


def test_short_test_period_still_evaluates(tmp_path):
    # 120 days leaves a 12-day test slice: too short to label regimes, but the
    # headline scores must still be written
    data = tmp_path / "short"
    assert main(["synth-data", "--out-dir", str(data), "--n", "120",
                 "--n-covariates", "2", "--seed", "4"]) == 0
    out = tmp_path / "short_run"
    code = main(["evaluate", "--inject", "zero", "--window", "5",
                 "--manifest", str(data / "manifest.json"), "--out-dir", str(out)])
    assert code == 0
    assert len(read_csv(out / "results.csv")) == 2
    assert read_csv(out / "regime_da.csv") == [
        ["dimension", "bucket", "n_days", "da_model", "da_rw"]]


def test_window_conflict_with_checkpoint(trained_dir, data_dir, tmp_path):
    code = main(["evaluate", "--checkpoint", str(trained_dir / "checkpoint.npz"),
                 "--manifest", str(data_dir / "manifest.json"),
                 "--out-dir", str(tmp_path / "x"), "--window", "9"])
    assert code == 2


def test_ablate_writes_report(data_dir, tmp_path):
    out = tmp_path / "abl"
    cfg = tmp_path / "abl.toml"
    cfg.write_text(TRAIN_TOML.replace("max_epochs = 2", "max_epochs = 1"))
    code = main(["ablate", "--config", str(cfg),
                 "--manifest", str(data_dir / "manifest.json"),
                 "--out-dir", str(out)])
    assert code == 0
    rows = read_csv(out / "ablation_report.csv")
    assert rows[0] == ["variant", "window", "param_count", "msfe_ratio", "da", "bh_t", "bh_p"]
    variants = [r[0] for r in rows[1:]]
    assert variants == ["full", "no_dvs", "no_msc", "no_se", "standard_attention"]
    counts = [int(r[2]) for r in rows[1:]]
    assert len(set(counts)) == 5  # every ablation moves the parameter count
    for variant in variants:
        assert (out / f"checkpoint_{variant}.npz").exists()
