"""Simulated latent-response generators, thresholding, label noise,
CSV ingestion/export, and the latent/prediction normalization used when
checking coverage.
"""

from __future__ import annotations

import csv
import dataclasses
import io
from typing import Callable, Optional

import numpy as np

from .network import ShapeError, TauGrid


class DatasetError(ValueError):
    """Raised for unknown generators or malformed dataset operations."""


class ParseError(ValueError):
    """Raised for malformed CSV input; carries the offending row number."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


@dataclasses.dataclass
class LabeledDataset:
    """Features in [-1, 1]^d plus binary labels; simulated data also carries
    the true latent response and the threshold used to binarize it."""

    features: np.ndarray
    labels: Optional[np.ndarray] = None
    latent: Optional[np.ndarray] = None
    threshold: Optional[float] = None
    name: str = ""
    column_names: Optional[list] = None
    scale_params: Optional[tuple] = None  # (col_min, col_max) from ingestion

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=float))
        if self.features.shape[0] < 1:
            raise DatasetError("dataset must contain at least one row")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=int)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclasses.dataclass(frozen=True)
class NoiseSpec:
    flip_fraction: float
    seed: int

    def __post_init__(self):
        if not 0.0 <= self.flip_fraction <= 0.5:
            raise DatasetError("flip fraction must lie in [0, 0.5]")


def _d4_signal(x):
    out = np.zeros_like(x)
    nz = x != 0
    out[nz] = 2.0 * x[nz] * np.sin(1.0 / (2.0 * x[nz]))
    return out


def _bump_signal(x):
    u = 3.0 * x
    return 2.0 * ((1.0 - u + 2.0 * u ** 2) * np.exp(-0.5 * u ** 2) - 1.5)


# (signal on x in (-1,1), noise sampler given rng and n); Gaussian noise
# widths are read as variances
GENERATORS: dict = {
    "D1": (lambda x: 5.0 * np.sin(8.0 * x),
           lambda rng, n: rng.normal(0.0, 1.0, n)),
    "D2": (lambda x: (4.0 * x) ** 2 / 2.0,
           lambda rng, n: rng.normal(0.0, np.sqrt(0.5), n)),
    "D3": (lambda x: np.sqrt((4.0 * x) ** 2 + 5.0) - 2.5,
           lambda rng, n: rng.uniform(-0.3, 0.3, n)),
    "D4": (_d4_signal,
           lambda rng, n: rng.normal(0.0, np.sqrt(0.5), n)),
    "D5": (_bump_signal,
           lambda rng, n: rng.normal(0.0, 0.5, n)),
    # chi^2(2)/4 noise via exact inverse CDF: chi^2(2) = -2 ln U
    "D6": (_bump_signal,
           lambda rng, n: -2.0 * np.log(rng.uniform(1e-300, 1.0, n)) / 4.0),
}


def signal_fn(dataset_id: str) -> Callable:
    if dataset_id not in GENERATORS:
        raise DatasetError(
            f"unknown dataset id {dataset_id!r}; valid ids: {sorted(GENERATORS)}")
    return GENERATORS[dataset_id][0]


def gen_dataset(dataset_id: str, n: int, seed: int) -> LabeledDataset:
    """Draw x ~ U(-1, 1) and the latent response for one of the six
    simulated families. Labels are attached separately by thresholding."""
    if dataset_id not in GENERATORS:
        raise DatasetError(
            f"unknown dataset id {dataset_id!r}; valid ids: {sorted(GENERATORS)}")
    if n < 1:
        raise DatasetError("n must be positive")
    signal, noise = GENERATORS[dataset_id]
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1.0, 1.0, n)
    latent = signal(x) + noise(rng, n)
    return LabeledDataset(features=x[:, None], latent=latent, name=dataset_id)


def threshold_labels(ds: LabeledDataset, mu: float) -> LabeledDataset:
    """Label 0 where latent <= mu, else 1; records the threshold."""
    if ds.latent is None:
        raise DatasetError("thresholding requires the true latent response")
    labels = (ds.latent > mu).astype(int)
    return dataclasses.replace(ds, labels=labels, threshold=float(mu))


def flip_labels(ds: LabeledDataset, spec: NoiseSpec) -> LabeledDataset:
    """Invert the labels of round(fraction * n) uniformly chosen rows."""
    if ds.labels is None:
        raise DatasetError("flip_labels requires labels")
    n_flip = int(round(spec.flip_fraction * ds.n))
    rng = np.random.default_rng(spec.seed)
    idx = rng.choice(ds.n, size=n_flip, replace=False)
    labels = ds.labels.copy()
    labels[idx] = 1 - labels[idx]
    return dataclasses.replace(ds, labels=labels)


def train_test_split(ds: LabeledDataset, test_fraction: float = 0.3,
                     seed: int = 0):
    """Deterministic seeded shuffle split; returns (train, test)."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(ds.n)
    n_test = int(round(test_fraction * ds.n))
    test_idx, train_idx = perm[:n_test], perm[n_test:]

    def subset(idx):
        return dataclasses.replace(
            ds,
            features=ds.features[idx],
            labels=None if ds.labels is None else ds.labels[idx],
            latent=None if ds.latent is None else ds.latent[idx],
        )

    return subset(train_idx), subset(test_idx)


def load_csv(path, label_column: str, scale: bool = True,
             threshold: Optional[float] = None, latent_column: Optional[str] = None,
             delimiter: str = ",") -> LabeledDataset:
    """Read a headered CSV into a dataset.

    The label column must be binary unless ``threshold`` is given, in which
    case it is treated as a real response and thresholded (<= threshold is
    class 0). Feature columns are affinely scaled per-column into [-1, 1]
    when ``scale`` is set; the scaling parameters are kept on the dataset so
    held-out data can reuse them.
    """
    with open(path, newline="") as fh:
        return _parse_csv(fh, label_column, scale, threshold, latent_column,
                          delimiter, name=str(path))


def _parse_csv(fh, label_column, scale, threshold, latent_column, delimiter,
               name=""):
    reader = csv.reader(fh, delimiter=delimiter)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty file: missing header row")
    header = [h.strip() for h in header]
    if label_column not in header:
        raise ParseError(f"label column {label_column!r} not found in header")
    if latent_column is not None and latent_column not in header:
        raise ParseError(f"latent column {latent_column!r} not found in header")
    label_idx = header.index(label_column)
    latent_idx = header.index(latent_column) if latent_column else None
    feat_idx = [i for i in range(len(header))
                if i != label_idx and i != latent_idx]
    rows, raw_labels, latents = [], [], []
    for rownum, row in enumerate(reader, start=2):
        if len(row) != len(header):
            raise ParseError(f"row {rownum}: expected {len(header)} fields, "
                             f"got {len(row)}", row=rownum)
        try:
            vals = [float(row[i]) for i in feat_idx]
            raw_labels.append(float(row[label_idx]))
            if latent_idx is not None:
                latents.append(float(row[latent_idx]))
        except ValueError:
            raise ParseError(f"row {rownum}: non-numeric field", row=rownum)
        rows.append(vals)
    if not rows:
        raise ParseError("no data rows")
    features = np.asarray(rows)
    raw_labels = np.asarray(raw_labels)
    if threshold is not None:
        labels = (raw_labels > threshold).astype(int)
    else:
        uniq = np.unique(raw_labels)
        if not np.all(np.isin(uniq, (0.0, 1.0))):
            raise ParseError("label column is not binary; pass a threshold "
                             "to binarize a real-valued response")
        labels = raw_labels.astype(int)
    scale_params = None
    if scale:
        lo = features.min(axis=0)
        hi = features.max(axis=0)
        features = scale_features(features, lo, hi)
        scale_params = (lo, hi)
    return LabeledDataset(
        features=features, labels=labels,
        latent=np.asarray(latents) if latents else None,
        threshold=threshold, name=name,
        column_names=[header[i] for i in feat_idx],
        scale_params=scale_params)


def scale_features(features, lo, hi):
    """Affine per-column map sending [lo, hi] to [-1, 1]; constant columns
    map to 0."""
    span = hi - lo
    safe = np.where(span == 0.0, 1.0, span)
    scaled = 2.0 * (features - lo) / safe - 1.0
    return np.where(span == 0.0, 0.0, scaled)


def write_csv(ds: LabeledDataset, path, grid: Optional[TauGrid] = None,
              quantile_preds: Optional[np.ndarray] = None) -> None:
    """Export a dataset (and optional per-level quantile columns) to CSV."""
    cols = ds.column_names or [f"x{i}" for i in range(ds.dim)]
    header = list(cols)
    if ds.latent is not None:
        header.append("latent")
    if ds.labels is not None:
        header.append("label")
    if quantile_preds is not None:
        header.extend(f"q_{t:.2f}" for t in grid.levels)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(ds.n):
            row = [repr(float(v)) for v in ds.features[i]]
            if ds.latent is not None:
                row.append(repr(float(ds.latent[i])))
            if ds.labels is not None:
                row.append(str(int(ds.labels[i])))
            if quantile_preds is not None:
                row.extend(repr(float(v)) for v in quantile_preds[i])
            writer.writerow(row)


def normalize_for_coverage(ds: LabeledDataset, preds: np.ndarray,
                           grid: TauGrid):
    """Standardize the thresholded latent and the predicted quantiles onto a
    common scale for coverage comparison.

    The threshold is subtracted from the true latent and the result is
    standardized to zero mean / unit sd. Every quantile column is then
    shifted and scaled by the mean and sd of the *median* column.
    Returns (normalized latent, normalized prediction matrix).
    """
    if ds.latent is None or ds.threshold is None:
        raise DatasetError("coverage normalization needs latent and threshold")
    preds = np.asarray(preds, dtype=float)
    if preds.shape[0] != ds.n:
        raise ShapeError("predictions are not aligned with dataset rows")
    if preds.shape[1] != len(grid):
        raise ShapeError("prediction width does not match grid size")
    centred = ds.latent - ds.threshold
    mu, sd = centred.mean(), centred.std()
    if sd == 0.0:
        raise DatasetError("degenerate latent distribution (zero spread)")
    latent_norm = (centred - mu) / sd
    med = preds[:, grid.median_index]
    med_mu, med_sd = med.mean(), med.std()
    if med_sd == 0.0:
        raise DatasetError("degenerate median prediction (zero spread)")
    preds_norm = (preds - med_mu) / med_sd
    return latent_norm, preds_norm


def dataset_from_csv_text(text: str, label_column: str, **kwargs) -> LabeledDataset:
    """Parse CSV content already in memory (mainly for tests)."""
    return _parse_csv(io.StringIO(text), label_column,
                      kwargs.pop("scale", True), kwargs.pop("threshold", None),
                      kwargs.pop("latent_column", None),
                      kwargs.pop("delimiter", ","))
