"""Quantile-based binary classification: latent conditional quantiles from
binary labels, confidence scoring, and Lipschitz-adaptive training."""

from .datasets import (LabeledDataset, NoiseSpec, flip_labels, gen_dataset,
                       load_csv, normalize_for_coverage, threshold_labels,
                       train_test_split)
from .losses import (BCE, BQR, CurvatureBounds, LossSpec, backward, bqr_grad_z,
                     bqr_loss, crossing_penalty, curvature_bounds,
                     lipschitz_const, prob_pos, total_loss)
from .metrics import (CoverageTable, DeltaBinReport, accuracy, coverage,
                      delta_report, roc_auc, roc_auc_at_delta)
from .network import (QuantileNet, TauGrid, forward, init_net, load_checkpoint,
                      param_count, save_checkpoint)
from .smoothing import (ConfidenceReport, SmoothedQuantileFn, conditional_mean,
                        conditional_stat, delta_score, delta_scores,
                        prediction_interval, smooth)
from .training import (TrainConfig, TrainTrace, NotReached, epochs_to_target,
                       estimate_kz, lalr_eta, train)

__version__ = "0.1.0"

__all__ = [
    "LabeledDataset", "NoiseSpec", "flip_labels", "gen_dataset", "load_csv",
    "normalize_for_coverage", "threshold_labels", "train_test_split",
    "BCE", "BQR", "CurvatureBounds", "LossSpec", "backward", "bqr_grad_z",
    "bqr_loss", "crossing_penalty", "curvature_bounds", "lipschitz_const",
    "prob_pos", "total_loss",
    "CoverageTable", "DeltaBinReport", "accuracy", "coverage", "delta_report",
    "roc_auc", "roc_auc_at_delta",
    "QuantileNet", "TauGrid", "forward", "init_net", "load_checkpoint",
    "param_count", "save_checkpoint",
    "ConfidenceReport", "SmoothedQuantileFn", "conditional_mean",
    "conditional_stat", "delta_score", "delta_scores", "prediction_interval",
    "smooth",
    "TrainConfig", "TrainTrace", "NotReached", "epochs_to_target",
    "estimate_kz", "lalr_eta", "train",
]
