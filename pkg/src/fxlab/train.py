"""Training loop: Adam on minibatch MSE with early stopping on validation loss.

All randomness (shuffling, dropout masks) flows from one seeded generator.
Epoch losses are window-weighted, so a reshuffle cannot change the reported
number when the parameters do not move. The returned parameters are always the
best-validation snapshot, never a later epoch.
"""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import Panel, gather_windows, window_rows
from .errors import ConfigError, TrainingError
from .model import ModelConfig, ParameterStore, model_forward


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 500
    patience: int = 20
    min_delta: float = 1e-6
    seed: int = 0
    clip_norm: float | None = None

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if self.min_delta < 0:
            raise ConfigError(f"min_delta must be >= 0, got {self.min_delta}")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ConfigError(f"clip_norm must be > 0, got {self.clip_norm}")


class Adam:
    """Adam with bias correction; beta1=0.9, beta2=0.999, eps=1e-8.

    A parameter whose gradient is absent or zero does not move while its
    moment estimates are zero, so a fresh optimizer step with no gradients is
    a no-op.
    """

    def __init__(self, params: list[Tensor], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_count = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.step_count += 1
        correct1 = 1.0 - self.beta1 ** self.step_count
        correct2 = 1.0 - self.beta2 ** self.step_count
        for p, m, v in zip(self.params, self._m, self._v):
            g = p.grad if p.grad is not None else 0.0
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            p.data = p.data - self.lr * (m / correct1) / (np.sqrt(v / correct2) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


def clip_gradients(params: list[Tensor], max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most max_norm."""
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.sum(np.square(p.grad)))
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0.0:
        factor = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * factor
    return norm


@dataclass
class TrainReport:
    train_mse: list[float] = field(default_factory=list)
    val_mse: list[float] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)
    best_epoch: int = -1
    best_val_mse: float = float("inf")
    stopped_early: bool = False

    @property
    def epochs_run(self) -> int:
        return len(self.train_mse)


def evaluate_mse(store: ParameterStore, config: ModelConfig, inputs: np.ndarray,
                 targets: np.ndarray) -> float:
    out = model_forward(store, config, inputs, training=False)
    return float(np.mean(np.square(out.pred.data - targets)))


def train_model(store: ParameterStore, model_cfg: ModelConfig, panel: Panel,
                train_cfg: TrainConfig) -> TrainReport:
    """Fit in place; the store ends at the best-validation parameters."""
    rng = np.random.default_rng(train_cfg.seed)
    train_batch = gather_windows(panel, model_cfg.window, "train")
    val_batch = gather_windows(panel, model_cfg.window, "val")
    n_train = len(train_batch.rows)
    optimizer = Adam(store.tensors(), lr=train_cfg.learning_rate)

    report = TrainReport()
    best_state = store.state()
    bad_epochs = 0
    for epoch in range(train_cfg.max_epochs):
        tic = time.perf_counter()
        order = rng.permutation(n_train)
        total_sq = 0.0
        for start in range(0, n_train, train_cfg.batch_size):
            idx = order[start:start + train_cfg.batch_size]
            x = train_batch.inputs[idx]
            y = train_batch.targets[idx]
            out = model_forward(store, model_cfg, x, training=True, rng=rng)
            loss = ad.mse(out.pred, Tensor(y))
            loss_value = loss.item()
            if not np.isfinite(loss_value):
                raise TrainingError(f"training loss became non-finite at epoch {epoch + 1}",
                                    epoch=epoch + 1)
            store.zero_grad()
            loss.backward()
            if train_cfg.clip_norm is not None:
                clip_gradients(store.tensors(), train_cfg.clip_norm)
            optimizer.step()
            total_sq += loss_value * len(idx)
        train_mse = total_sq / n_train
        val_mse = evaluate_mse(store, model_cfg, val_batch.inputs, val_batch.targets)
        if not np.isfinite(val_mse):
            raise TrainingError(f"validation loss became non-finite at epoch {epoch + 1}",
                                epoch=epoch + 1)
        report.train_mse.append(train_mse)
        report.val_mse.append(val_mse)
        report.epoch_seconds.append(time.perf_counter() - tic)

        if val_mse < report.best_val_mse - train_cfg.min_delta:
            report.best_val_mse = val_mse
            report.best_epoch = epoch
            best_state = store.state()
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= train_cfg.patience:
                report.stopped_early = True
                break

    store.load_state(best_state)
    return report


def write_training_log(report: TrainReport, path) -> None:
    """epoch,train_mse,val_mse rows; epoch numbering starts at 1."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_mse", "val_mse"])
        for i, (tr, va) in enumerate(zip(report.train_mse, report.val_mse), start=1):
            writer.writerow([i, repr(tr), repr(va)])
