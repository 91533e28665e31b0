"""Post-processing of discrete quantile predictions: Gaussian-kernel
smoothing of the quantile function, conditional moments by quadrature,
prediction intervals, and the per-sample confidence score.
"""

from __future__ import annotations

import dataclasses

import numpy as np
from scipy.special import ndtr

from .losses import DomainError
from .network import ShapeError, TauGrid

# boundary anchors for the smoothing sum: levels 0 and 1 flank the grid
TAU_LO = 0.0
TAU_HI = 1.0

DEFAULT_BANDWIDTH = 0.1

# composite-Simpson quadrature grid for conditional moments; the smoothed
# function is finite on the closed interval [0, 1]
_QUAD_POINTS = 1001


class OutOfGridError(ValueError):
    """Requested quantile level is outside the representable range."""


@dataclasses.dataclass
class SmoothedQuantileFn:
    """Kernel-smoothed quantile function for one sample, evaluable on (0,1).

    Each grid value owns the probability interval between the midpoints of
    its neighboring levels (boundary levels extend to 0 and 1), and is
    weighted by the Gaussian-kernel mass of that interval. The weights are
    renormalized to a partition of unity so that a constant grid maps to a
    constant function; a symmetric grid with antisymmetric values yields an
    antisymmetric smoothed function.
    """

    grid: TauGrid
    values: np.ndarray
    bandwidth: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.bandwidth <= 0:
            raise DomainError("bandwidth must be positive")
        if self.values.shape != (len(self.grid),):
            raise ShapeError("values must align with the grid")
        taus = self.grid.array
        # knot i / i+1 bracket the interval owned by grid level i
        self._knots = np.concatenate(
            ([TAU_LO], 0.5 * (taus[:-1] + taus[1:]), [TAU_HI]))
        self._coef = self.values

    def weights(self, tau):
        """Normalized per-interval weights at the given evaluation levels."""
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        cdf = ndtr((tau[:, None] - self._knots[None, :]) / self.bandwidth)
        w = cdf[:, :-1] - cdf[:, 1:]
        return w / w.sum(axis=1, keepdims=True)

    def __call__(self, tau):
        tau_arr = np.atleast_1d(np.asarray(tau, dtype=float))
        out = self.weights(tau_arr) @ self._coef
        if np.isscalar(tau) or np.asarray(tau).ndim == 0:
            return float(out[0])
        return out


def smooth(values, grid: TauGrid,
           h: float = DEFAULT_BANDWIDTH) -> SmoothedQuantileFn:
    """Build the Gaussian-kernel smoothed quantile function."""
    return SmoothedQuantileFn(grid=grid, values=np.asarray(values, dtype=float),
                              bandwidth=h)


def _quad_grid():
    return np.linspace(0.0, 1.0, _QUAD_POINTS)


def _simpson(fx, x):
    h = x[1] - x[0]
    return h / 3.0 * (fx[0] + fx[-1] + 4.0 * fx[1:-1:2].sum()
                      + 2.0 * fx[2:-1:2].sum())


def conditional_mean(sq: SmoothedQuantileFn) -> float:
    """Mean response: integral of the smoothed quantile function over (0,1)."""
    taus = _quad_grid()
    return float(_simpson(sq(taus), taus))


def conditional_stat(sq: SmoothedQuantileFn, functional: str = "variance",
                     k: int = 2) -> float:
    """Conditional summary via quantile integration.

    ``variance`` integrates the squared smoothed quantiles and subtracts the
    squared mean; ``moment`` returns the raw k-th moment.
    """
    taus = _quad_grid()
    q = sq(taus)
    if functional == "variance":
        mean = _simpson(q, taus)
        return float(_simpson(q ** 2, taus) - mean ** 2)
    if functional == "moment":
        return float(_simpson(q ** k, taus))
    raise ValueError(f"unknown functional {functional!r}")


def prediction_interval(values, grid: TauGrid, level: float):
    """Central interval [Q(level/2), Q(1 - level/2)] covering (1 - level).

    Endpoints come from piecewise-linear interpolation of the grid values;
    both target levels must lie within the grid's span.
    """
    values = np.asarray(values, dtype=float)
    taus = grid.array
    lo_t, hi_t = 0.5 * level, 1.0 - 0.5 * level
    if lo_t < taus[0] - 1e-12 or hi_t > taus[-1] + 1e-12:
        raise OutOfGridError(
            f"interval levels ({lo_t:.3f}, {hi_t:.3f}) fall outside the grid "
            f"span [{taus[0]}, {taus[-1]}]")
    lo = float(np.interp(lo_t, taus, values))
    hi = float(np.interp(hi_t, taus, values))
    return lo, hi


@dataclasses.dataclass(frozen=True)
class ConfidenceReport:
    """Per-sample confidence: distance (in quantile probability) from the
    median to the latent sign change, the implied label, and the calibrated
    expected misclassification rate 0.5 - delta."""

    delta: float
    predicted_label: int

    @property
    def expected_misclassification(self) -> float:
        return 0.5 - self.delta


def delta_score(values, grid: TauGrid) -> ConfidenceReport:
    """Confidence score from the piecewise-linear interpolant of the
    quantile vector over the grid.

    delta is the smallest d with Q(0.5 - d) <= 0 <= Q(0.5 + d); with a
    median away from zero this is the distance from 0.5 to the nearest
    zero crossing on the relevant side, capped at 0.5 when the interpolant
    never crosses zero inside the grid.
    """
    values = np.asarray(values, dtype=float)
    taus = grid.array
    if values.shape != taus.shape:
        raise ShapeError("values must align with the grid")
    mid = grid.median_index
    if abs(taus[mid] - 0.5) > 1e-12:
        raise DomainError("grid must contain the median level 0.5")
    q_med = values[mid]
    if q_med == 0.0:
        return ConfidenceReport(delta=0.0, predicted_label=0)
    if q_med > 0:
        tau_star = _nearest_crossing(taus, values, mid, direction=-1)
        delta = 0.5 if tau_star is None else 0.5 - tau_star
        label = 1
    else:
        tau_star = _nearest_crossing(taus, values, mid, direction=+1)
        delta = 0.5 if tau_star is None else tau_star - 0.5
        label = 0
    return ConfidenceReport(delta=float(min(max(delta, 0.0), 0.5)),
                            predicted_label=label)


def _nearest_crossing(taus, values, mid, direction):
    """Zero of the linear interpolant nearest the median on one side.

    Scanning outward from the median, the previous knot always has the
    median's sign, so the first knot of opposite (or zero) value brackets
    the crossing.
    """
    if direction < 0:
        for a in range(mid - 1, -1, -1):
            if values[a] <= 0.0:
                b = a + 1
                return float(taus[a] - values[a] * (taus[b] - taus[a])
                             / (values[b] - values[a]))
    else:
        for b in range(mid + 1, len(taus)):
            if values[b] >= 0.0:
                a = b - 1
                return float(taus[a] - values[a] * (taus[b] - taus[a])
                             / (values[b] - values[a]))
    return None


def delta_scores(pred_matrix, grid: TauGrid):
    """delta_score applied row-wise to a prediction matrix."""
    return [delta_score(row, grid) for row in np.asarray(pred_matrix, dtype=float)]
