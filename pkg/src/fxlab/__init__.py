"""Desk-scale laboratory for daily FX return forecasting.

The pieces compose in the order data -> model -> training -> evaluation ->
backtest -> importance; the cli module wires them into subcommands.
"""
from .autodiff import Tensor
from .backtest import FrictionSpec, regime_partition, run_backtest, stratified_accuracy
from .config import RunConfig, load_config, parse_config
from .data import Panel, build_panel, gather_windows, load_manifest
from .errors import ConfigError, DataError, DimensionError, NumericError, TrainingError
from .evaluation import (
    EvaluationRow,
    blaskowitz_herwartz,
    clark_west,
    evaluate_forecasts,
    msfe_ratio,
    newey_west_lrv,
)
from .importance import global_importance, importance_matrix
from .model import (
    ABLATIONS,
    ModelConfig,
    ablation_config,
    init_params,
    load_checkpoint,
    model_forward,
    parameter_count,
    predict,
    save_checkpoint,
)
from .synthetic import generate_files, generate_panel
from .train import TrainConfig, TrainReport, train_model

__version__ = "0.1.0"

__all__ = [
    "ABLATIONS",
    "ConfigError",
    "DataError",
    "DimensionError",
    "EvaluationRow",
    "FrictionSpec",
    "ModelConfig",
    "NumericError",
    "Panel",
    "RunConfig",
    "Tensor",
    "TrainConfig",
    "TrainReport",
    "TrainingError",
    "ablation_config",
    "blaskowitz_herwartz",
    "build_panel",
    "clark_west",
    "evaluate_forecasts",
    "gather_windows",
    "generate_files",
    "generate_panel",
    "global_importance",
    "importance_matrix",
    "init_params",
    "load_checkpoint",
    "load_config",
    "load_manifest",
    "model_forward",
    "msfe_ratio",
    "newey_west_lrv",
    "parameter_count",
    "parse_config",
    "predict",
    "regime_partition",
    "run_backtest",
    "save_checkpoint",
    "stratified_accuracy",
    "train_model",
    "__version__",
]
