"""Minibatch SGD with either a fixed learning rate or the Lipschitz-adaptive
rule eta = 1 / (k_z * L), where k_z bounds the output-parameter gradients and
L is the loss Lipschitz constant.
"""

from __future__ import annotations

import csv
import dataclasses
from typing import Optional

import numpy as np

from . import losses
from .network import (QuantileNet, ShapeError, apply_step, forward,
                      forward_cached)

FIXED = "fixed"
LALR = "lalr"

DEFAULT_ETA_CAP = 10.0
DEFAULT_KZ_FLOOR = 1e-3


class TrainingDiverged(RuntimeError):
    """Raised when the loss goes non-finite; carries the trace so far."""

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int
    lr_mode: str = FIXED
    eta: float = 0.1
    seed: int = 0
    kz_floor: float = DEFAULT_KZ_FLOOR
    eta_cap: float = DEFAULT_ETA_CAP
    shuffle: bool = True

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch size must be positive")
        if self.lr_mode not in (FIXED, LALR):
            raise ValueError(f"unknown lr mode {self.lr_mode!r}")
        if self.lr_mode == FIXED and self.eta <= 0:
            raise ValueError("fixed learning rate must be positive")
        if self.kz_floor <= 0:
            raise ValueError("kz floor must be positive")


@dataclasses.dataclass
class EpochRecord:
    epoch: int
    loss: float
    accuracy: float
    eta: float
    kz: float


@dataclasses.dataclass
class TrainTrace:
    records: list

    def accuracies(self):
        return [r.accuracy for r in self.records]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "loss", "accuracy", "eta", "kz"])
            for r in self.records:
                writer.writerow([r.epoch, repr(r.loss), repr(r.accuracy),
                                 repr(r.eta), repr(r.kz)])


@dataclasses.dataclass
class NotReached:
    """Target accuracy never attained; reports the best accuracy seen."""

    max_accuracy: float

    def __str__(self):
        return f"N/A ({self.max_accuracy:.3f})"


def estimate_kz(net: QuantileNet, x: np.ndarray,
                kz_floor: float = DEFAULT_KZ_FLOOR) -> float:
    """Max-norm bound on the gradient of any network output w.r.t. the
    parameters, maximized over the batch, floored at kz_floor.

    For a linear head over ReLU trunk activations, the per-layer
    output-parameter gradient of head j is an outer product delta * a, so
    its max-norm factorizes as max|delta| * max(|a|, 1) (the 1 covers the
    bias coordinates).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[0] == 0:
        raise ShapeError("empty batch")
    _, acts, pres = forward_cached(net, x)
    best = 0.0
    for j in range(net.n_heads):
        # head-j parameter gradients: trunk output activations and 1 (bias)
        head_best = np.maximum(np.abs(acts[-1]).max(axis=1), 1.0)
        best = max(best, float(head_best.max()))
        delta = np.broadcast_to(net.head_w[j], acts[-1].shape)
        for i in range(len(net.trunk_w) - 1, -1, -1):
            dpre = delta * (pres[i] >= 0.0)
            a_prev = np.abs(acts[i]).max(axis=1) if acts[i].shape[1] else 0.0
            layer_best = np.abs(dpre).max(axis=1) * np.maximum(a_prev, 1.0)
            best = max(best, float(layer_best.max()))
            delta = dpre @ net.trunk_w[i]
    return max(best, kz_floor)


def lalr_eta(kz: float, lip: float,
             eta_cap: float = DEFAULT_ETA_CAP) -> float:
    """Adaptive learning rate 1 / (kz * lip), capped at eta_cap."""
    if kz <= 0 or lip <= 0:
        raise losses.DomainError("kz and Lipschitz constant must be positive")
    return min(1.0 / (kz * lip), eta_cap)


def _predict_labels(net, x, spec):
    z = forward(net, x)
    if spec.kind == losses.BCE:
        return (z[:, 0] > 0).astype(int)
    return (z[:, net.grid.median_index] > 0).astype(int)


def train(net: QuantileNet, x: np.ndarray, y: np.ndarray,
          spec: losses.LossSpec, cfg: TrainConfig,
          eval_x: Optional[np.ndarray] = None,
          eval_y: Optional[np.ndarray] = None):
    """Run minibatch SGD; returns (trained net copy, TrainTrace).

    Per-epoch accuracy is computed on (eval_x, eval_y) if given, else on the
    training set. In lalr mode k_z is re-estimated once per epoch from the
    first shuffled batch.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    if x.shape[0] != y.shape[0]:
        raise ShapeError("features and labels are misaligned")
    if x.shape[0] == 0:
        raise ShapeError("empty dataset")
    net = net.copy()
    trace = TrainTrace(records=[])
    n = x.shape[0]
    lip = losses.lipschitz_const(spec)
    rng = np.random.default_rng(cfg.seed)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        first = order[:cfg.batch_size]
        if cfg.lr_mode == LALR:
            kz = estimate_kz(net, x[first], cfg.kz_floor)
            eta = lalr_eta(kz, lip, cfg.eta_cap)
        else:
            kz = float("nan")
            eta = cfg.eta
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            try:
                grads, loss = losses.backward(net, x[idx], y[idx], spec)
            except FloatingPointError:
                raise TrainingDiverged(
                    f"non-finite network output at epoch {epoch}", trace)
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}", trace)
            apply_step(net, grads, eta)
            epoch_loss += loss * len(idx)
        acc = _accuracy_on(net, spec,
                           eval_x if eval_x is not None else x,
                           eval_y if eval_y is not None else y)
        trace.records.append(EpochRecord(epoch, epoch_loss / n, acc, eta, kz))
    return net, trace


def _accuracy_on(net, spec, x, y):
    pred = _predict_labels(net, x, spec)
    return float(np.mean(pred == np.asarray(y, dtype=int)))


def epochs_to_target(trace: TrainTrace, target_acc: float):
    """First epoch index whose accuracy meets the target, or NotReached."""
    best = 0.0
    for rec in trace.records:
        if rec.accuracy >= target_acc:
            return rec.epoch
        best = max(best, rec.accuracy)
    return NotReached(best)
