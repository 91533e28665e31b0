"""Binary quantile classification loss: probability map, per-sample loss,
analytic gradients, crossing penalty, cross-entropy baseline, and the
Lipschitz / curvature constants used by adaptive learning rates.

Everything is vectorized over numpy arrays and pure.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .network import ShapeError, TauGrid

# clamp for probabilities before taking logs; keeps the loss finite for
# arbitrarily large latents at a cost < 1e-11 in loss value
_P_EPS = 1e-12

BQR = "bqr"
BCE = "bce"


class DomainError(ValueError):
    """Raised when a probability/latent argument is outside its domain."""


@dataclasses.dataclass(frozen=True)
class LossSpec:
    """Loss configuration: grid of levels, crossing weight, and kind."""

    grid: TauGrid
    lam: float = 1.0
    kind: str = BQR

    def __post_init__(self):
        if self.lam < 0:
            raise DomainError("crossing weight must be non-negative")
        if self.kind not in (BQR, BCE):
            raise DomainError(f"unknown loss kind {self.kind!r}")
        if self.kind == BCE and len(self.grid) != 1:
            raise DomainError("cross-entropy baseline uses a single output head")


def _check_tau(tau):
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0.0) or np.any(tau >= 1.0):
        raise DomainError("tau must lie strictly in (0, 1)")
    return tau


def prob_pos(z, tau):
    """P(label = 1) for latent quantile value z at level tau.

    Piecewise in z: 1 - tau*exp((tau-1)z) for z > 0, (1-tau)*exp(tau*z)
    for z <= 0. Continuous at 0 (both branches give 1 - tau) and strictly
    increasing in z.
    """
    tau = _check_tau(tau)
    z = np.asarray(z, dtype=float)
    pos = z > 0
    p = np.where(pos,
                 1.0 - tau * np.exp(np.minimum(tau - 1.0, 0.0) * np.abs(z)),
                 (1.0 - tau) * np.exp(tau * np.minimum(z, 0.0)))
    if p.ndim == 0:
        return float(p)
    return p


def bqr_loss(y, z, tau):
    """Negative log-likelihood of a binary label under the latent model."""
    p = np.clip(prob_pos(z, tau), _P_EPS, 1.0 - _P_EPS)
    y = np.asarray(y, dtype=float)
    out = -(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    if out.ndim == 0:
        return float(out)
    return out


def bqr_grad_z(y, z, tau):
    """Analytic d(loss)/dz on each branch; z = 0 uses the z <= 0 branch.

    Closed forms:
      y=1, z>0:  -tau(1-tau) e^{(tau-1)z} / (1 - tau e^{(tau-1)z})
      y=0, z>0:  1 - tau
      y=1, z<=0: -tau
      y=0, z<=0: tau(1-tau) e^{tau z} / (1 - (1-tau) e^{tau z})
    The magnitude never exceeds max(tau, 1-tau).
    """
    tau = _check_tau(tau)
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    pos = z > 0
    zp = np.where(pos, z, 0.0)
    zn = np.where(pos, 0.0, z)
    e_pos = np.exp((tau - 1.0) * zp)
    e_neg = np.exp(tau * zn)
    g_pos = y * (-tau * (1.0 - tau) * e_pos / (1.0 - tau * e_pos)) \
        + (1.0 - y) * (1.0 - tau)
    g_neg = y * (-tau) \
        + (1.0 - y) * (tau * (1.0 - tau) * e_neg / (1.0 - (1.0 - tau) * e_neg))
    g = np.where(pos, g_pos, g_neg)
    if g.ndim == 0:
        return float(g)
    return g


def crossing_penalty(values):
    """Hinge penalty for adjacent quantile crossings, plus its subgradient.

    Returns (penalty, subgrad). Penalty is sum over adjacent pairs of
    max(0, Q(tau_p) - Q(tau_{p+1})); it is zero iff values are
    non-decreasing. The subgradient is +1/-1 on strictly violating pairs
    and 0 elsewhere.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[None, :]
        squeeze = True
    else:
        squeeze = False
    if values.shape[-1] < 2:
        raise ShapeError("crossing penalty needs at least two quantile levels")
    diff = values[..., :-1] - values[..., 1:]
    active = diff > 0.0
    penalty = np.where(active, diff, 0.0).sum(axis=-1)
    sub = np.zeros_like(values)
    sub[..., :-1] += active.astype(float)
    sub[..., 1:] -= active.astype(float)
    if squeeze:
        return float(penalty[0]), sub[0]
    return penalty, sub


def total_loss(y, pred, spec: LossSpec):
    """Per-sample loss: sum of per-level losses plus lam * crossing penalty.

    For the cross-entropy baseline the single output is passed through a
    sigmoid and scored with standard binary cross-entropy.
    """
    pred = np.asarray(pred, dtype=float)
    single = pred.ndim == 1
    if single:
        pred = pred[None, :]
    if pred.shape[-1] != len(spec.grid):
        raise ShapeError("prediction length does not match grid size")
    y = np.asarray(y, dtype=float)
    if spec.kind == BCE:
        p = _sigmoid(pred[:, 0])
        p = np.clip(p, _P_EPS, 1.0 - _P_EPS)
        loss = -(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    else:
        taus = spec.grid.array
        loss = bqr_loss(y[..., None] if not single else y, pred, taus).sum(axis=-1)
        if spec.lam > 0 and pred.shape[-1] >= 2:
            pen, _ = crossing_penalty(pred)
            loss = loss + spec.lam * pen
    return float(loss[0]) if single else loss


def total_grad(y, pred, spec: LossSpec):
    """d(total_loss)/d(pred), vectorized over rows."""
    pred = np.asarray(pred, dtype=float)
    single = pred.ndim == 1
    if single:
        pred = pred[None, :]
    y = np.asarray(y, dtype=float)
    if y.ndim == 0:
        y = y[None]
    if spec.kind == BCE:
        g = np.zeros_like(pred)
        g[:, 0] = _sigmoid(pred[:, 0]) - y
    else:
        taus = spec.grid.array
        g = bqr_grad_z(y[:, None], pred, taus)
        if spec.lam > 0 and pred.shape[-1] >= 2:
            _, sub = crossing_penalty(pred)
            g = g + spec.lam * sub
    return g[0] if single else g


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def lipschitz_const(spec: LossSpec) -> float:
    """Upper bound on the Lipschitz constant of the total per-sample loss
    with respect to the prediction vector.

    Per level the constant is max(tau, 1-tau); the summed multi-level loss
    adds the per-level constants, and each hinge term is 1-Lipschitz in each
    of its two arguments, contributing 2*lam*(m-1). The cross-entropy
    baseline gradient is bounded by 1.
    """
    if spec.kind == BCE:
        return 1.0
    taus = spec.grid.array
    base = float(np.maximum(taus, 1.0 - taus).sum())
    m = len(taus)
    if m >= 2:
        base += 2.0 * spec.lam * (m - 1)
    return base


@dataclasses.dataclass(frozen=True)
class CurvatureBounds:
    """Quadratic sandwich constants for the expected excess loss."""

    c1: float
    c2: float
    a1: float
    a2: float
    a3: float
    a4: float
    m_bound: float
    tau: float


def curvature_bounds(tau: float, m_bound: float) -> CurvatureBounds:
    """Lower/upper curvature constants for latents bounded by m_bound.

    The four region-wise lower bounds on the second derivative of the
    expected loss, minimized and halved, give c1; the global upper bound
    tau*(1-tau), halved, gives c2.
    """
    t = float(_check_tau(tau))
    m = float(m_bound)
    if m <= 0:
        raise DomainError("latent bound must be positive")
    a1 = t * (1 - t) ** 2 * np.exp(-(1 - t) * m) / (1 - t * np.exp(-(1 - t) * m))
    a2 = t ** 2 * (1 - t) * np.exp(-t * m) / (1 - (1 - t) * np.exp(-t * m))
    a3 = t * (1 - t) ** 3 * np.exp(-m) / (1 - t * np.exp(-(1 - t) * m)) ** 2
    a4 = t ** 3 * (1 - t) * np.exp(-m) / (1 - (1 - t) * np.exp(-m)) ** 2
    c1 = 0.5 * min(a1, a2, a3, a4)
    c2 = 0.5 * t * (1 - t)
    return CurvatureBounds(c1=float(c1), c2=float(c2), a1=float(a1),
                           a2=float(a2), a3=float(a3), a4=float(a4),
                           m_bound=m, tau=t)


def backward(net, x, y, spec: LossSpec):
    """Gradient of the mean total loss over a batch w.r.t. every parameter.

    Returns (Gradients, mean loss). The analytic gradient matches central
    finite differences away from the loss and ReLU kinks.
    """
    from .network import backprop_from_outputs, forward_cached

    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape[0] == 0:
        raise ShapeError("empty batch")
    if x.shape[0] != y.shape[0]:
        raise ShapeError("features and labels are misaligned")
    z, acts, pres = forward_cached(net, x)
    if not np.all(np.isfinite(z)):
        raise FloatingPointError("non-finite network output")
    n = x.shape[0]
    dz = total_grad(y, z, spec) / n
    grads = backprop_from_outputs(net, acts, pres, dz)
    loss = float(np.mean(total_loss(y, z, spec)))
    return grads, loss
