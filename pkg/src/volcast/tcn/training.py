"""Mini-batch training loop."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import NumericalError
from .model import TcnModel
from .optim import AdadeltaState, adadelta_step

logger = logging.getLogger(__name__)

TARGET_MODES = ("sequence", "last")


@dataclass(frozen=True)
class TrainConfig:
    """``target="sequence"`` fits every output position to the window shifted
    one step ahead; ``"last"`` only scores the final (forecast) position."""

    epochs: int = 300
    batch_size: int = 32
    seed: int = 0
    loss: str = "mse"
    target: str = "sequence"
    shuffle_each_epoch: bool = True
    rho: float = 0.95
    epsilon: float = 1e-6

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.loss != "mse":
            raise ValueError("only the 'mse' loss is supported")
        if self.target not in TARGET_MODES:
            raise ValueError(f"target must be one of {TARGET_MODES}")


@dataclass
class TrainResult:
    model: TcnModel
    loss_history: np.ndarray
    state: AdadeltaState

    def write_loss_history(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "mean_loss"])
            for epoch, loss in enumerate(self.loss_history, start=1):
                w.writerow([epoch, f"{loss:.17g}"])


def _batch_loss(out, targets, scalar_targets, mode):
    if mode == "sequence":
        diff = out - targets
        return float(np.mean(diff * diff)), (2.0 / diff.size) * diff
    diff = out[:, -1] - scalar_targets
    grad = np.zeros_like(out)
    grad[:, -1] = (2.0 / diff.size) * diff
    return float(np.mean(diff * diff)), grad


def train(model: TcnModel, dataset, cfg: TrainConfig) -> TrainResult:
    """Train a copy of ``model`` on ``dataset`` (a WindowedDataset).

    Runs ``epochs * ceil(n / batch_size)`` Adadelta steps on mini-batch mean
    loss and records the size-weighted mean batch loss of every epoch.
    """
    n = len(dataset)
    if n == 0:
        raise ValueError("cannot train on an empty dataset")
    model = model.copy()
    rng = np.random.default_rng(cfg.seed)
    state = AdadeltaState.zeros_like(model.get_flat(), cfg.rho, cfg.epsilon)
    inputs, targets, scalars = dataset.inputs, dataset.targets, dataset.scalar_targets
    n_batches = math.ceil(n / cfg.batch_size)
    history = np.empty(cfg.epochs)
    order = np.arange(n)
    params = model.get_flat()
    for epoch in range(cfg.epochs):
        if cfg.shuffle_each_epoch:
            order = rng.permutation(n)
        total = 0.0
        for b in range(n_batches):
            idx = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            out, tape = model.forward(inputs[idx])
            loss, gout = _batch_loss(out, targets[idx], scalars[idx], cfg.target)
            if not math.isfinite(loss):
                norms = ", ".join(f"{np.linalg.norm(p):.3g}" for p in model.params())
                raise NumericalError(f"non-finite loss at epoch {epoch + 1}, batch {b + 1}; "
                                     f"parameter norms [{norms}]")
            total += loss * idx.size
            params, state = adadelta_step(params, model.backward(tape, gout), state)
            model.set_flat(params)
        history[epoch] = total / n
        logger.debug("epoch %d loss %.6g", epoch + 1, history[epoch])
    return TrainResult(model, history, state)
