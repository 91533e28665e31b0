"""Dataset-level metrics: empirical coverage, confidence-binned
misclassification and retention, calibration fit, rank AUC, and accuracy.

Undefined values (empty retained sets, empty bins) are surfaced as None,
never silently dropped, so report shapes stay fixed.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from typing import Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .network import ShapeError, TauGrid

DELTA_BIN_CENTERS = (0.1, 0.2, 0.3, 0.4, 0.5)


@dataclasses.dataclass
class CoverageTable:
    grid: TauGrid
    coverage: np.ndarray

    def to_csv(self, path, dataset_name: str = ""):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["dataset"] + [f"{t:g}" for t in self.grid.levels])
            writer.writerow([dataset_name] + [f"{c:.4f}" for c in self.coverage])


def coverage(norm_latent, norm_preds, grid: TauGrid) -> CoverageTable:
    """Fraction of rows whose (normalized) latent lies strictly below each
    quantile column. Nominally tau at every level for correct quantiles."""
    norm_latent = np.asarray(norm_latent, dtype=float)
    norm_preds = np.asarray(norm_preds, dtype=float)
    if norm_preds.shape != (norm_latent.shape[0], len(grid)):
        raise ShapeError("latent and prediction matrix are misaligned")
    cov = (norm_latent[:, None] < norm_preds).mean(axis=0)
    return CoverageTable(grid=grid, coverage=cov)


def accuracy(predicted, actual) -> float:
    predicted = np.asarray(predicted, dtype=int)
    actual = np.asarray(actual, dtype=int)
    if predicted.shape != actual.shape:
        raise ShapeError("prediction and label vectors are misaligned")
    if predicted.size == 0:
        raise ValueError("accuracy of an empty sample is undefined")
    return float(np.mean(predicted == actual))


def r_squared(observed, predicted) -> float:
    """Coefficient of determination of predicted against observed; can be
    arbitrarily negative for a poor fit."""
    observed = np.asarray(observed, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    ss_res = float(np.sum((observed - predicted) ** 2))
    ss_tot = float(np.sum((observed - observed.mean()) ** 2))
    if ss_tot == 0.0:
        return 1.0 if ss_res == 0.0 else float("-inf")
    return 1.0 - ss_res / ss_tot


@dataclasses.dataclass
class DeltaBinReport:
    thresholds: Sequence[float]
    misclassification: list  # per threshold; None when nothing retained
    retention: list
    bin_centers: Sequence[float]
    bin_mean_delta: list  # per bin; None when empty
    bin_misclassification: list
    r2: Optional[float]

    def to_csv(self, path, dataset_name: str = ""):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["dataset", "rate"]
                            + [f"{t:g}" for t in self.thresholds] + ["r2"])
            fmt = lambda v: "NA" if v is None else f"{v:.4f}"
            writer.writerow([dataset_name, "m_r"]
                            + [fmt(v) for v in self.misclassification]
                            + [fmt(self.r2)])
            writer.writerow([dataset_name, "r_r"]
                            + [f"{v:.4f}" for v in self.retention] + [""])


def delta_report(reports, labels,
                 thresholds: Sequence[float] = DELTA_BIN_CENTERS,
                 bin_centers: Sequence[float] = DELTA_BIN_CENTERS) -> DeltaBinReport:
    """Misclassification and retention per confidence threshold, plus the
    calibration fit of per-bin misclassification against 0.5 - mean(delta).

    A row is retained at threshold t when its delta >= t; bins assign each
    row to the nearest center.
    """
    labels = np.asarray(labels, dtype=int)
    if len(reports) != labels.shape[0]:
        raise ShapeError("reports and labels are misaligned")
    for t in thresholds:
        if not 0.0 <= t <= 0.5:
            raise ValueError("thresholds must lie in [0, 0.5]")
    deltas = np.array([r.delta for r in reports])
    predicted = np.array([r.predicted_label for r in reports])
    wrong = predicted != labels
    m_r, r_r = [], []
    for t in thresholds:
        keep = deltas >= t
        r_r.append(float(keep.mean()))
        m_r.append(float(wrong[keep].mean()) if keep.any() else None)
    centers = np.asarray(bin_centers, dtype=float)
    assign = np.argmin(np.abs(deltas[:, None] - centers[None, :]), axis=1)
    bin_mean_delta, bin_m = [], []
    for j in range(len(centers)):
        members = assign == j
        if members.any():
            bin_mean_delta.append(float(deltas[members].mean()))
            bin_m.append(float(wrong[members].mean()))
        else:
            bin_mean_delta.append(None)
            bin_m.append(None)
    obs = [m for m in bin_m if m is not None]
    pred = [0.5 - d for d, m in zip(bin_mean_delta, bin_m) if m is not None]
    r2 = r_squared(obs, pred) if len(obs) >= 2 else None
    return DeltaBinReport(thresholds=list(thresholds), misclassification=m_r,
                          retention=r_r, bin_centers=list(bin_centers),
                          bin_mean_delta=bin_mean_delta,
                          bin_misclassification=bin_m, r2=r2)


def roc_auc(scores, labels) -> Optional[float]:
    """Rank-statistic AUC; ties contribute half. None when one class is
    absent."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(scores)
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_auc_at_delta(scores, labels, reports, delta_min: float) -> Optional[float]:
    """AUC restricted to rows whose confidence meets delta_min."""
    if not 0.0 <= delta_min <= 0.5:
        raise ValueError("delta_min must lie in [0, 0.5]")
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    deltas = np.array([r.delta for r in reports])
    if not (scores.shape[0] == labels.shape[0] == deltas.shape[0]):
        raise ShapeError("scores, labels, and reports are misaligned")
    keep = deltas >= delta_min
    return roc_auc(scores[keep], labels[keep])


def summary_json(path, payload: dict) -> None:
    """Write a reproducibility summary (config, seeds, metrics) as JSON."""
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_jsonify)
        fh.write("\n")


def _jsonify(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)!r}")
