"""Squared loss on the observed entries, its gradient, line search and NMSE.

Every quantity is aggregated over the unique index set ``U``, so inner loops
have length ``u`` no matter how many duplicate samples there are.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import ObservedData


@dataclass(frozen=True)
class LossContext:
    data: ObservedData
    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")

    @property
    def y_on_U(self) -> np.ndarray:
        return self.data.y_sum

    @property
    def mult(self) -> np.ndarray:
        return self.data.multiplicity

    @property
    def n(self) -> int:
        return self.data.n


def _check(vec, ctx: LossContext) -> np.ndarray:
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape != (ctx.data.u,):
        raise ValueError(f"expected a vector of length {ctx.data.u}, got shape {vec.shape}")
    return vec


def loss(iterate, ctx: LossContext) -> float:
    """Mean squared error of ``iterate`` (values on U) over all n samples."""
    x = _check(iterate, ctx)
    d = ctx.data
    val = (d.y_sq_sum - 2.0 * np.dot(x, d.y_sum) + np.dot(d.multiplicity * x, x)) / d.n
    # cancellation can leave a tiny negative at a perfect fit
    return max(float(val), 0.0)


def gradient(iterate, ctx: LossContext) -> np.ndarray:
    x = _check(iterate, ctx)
    d = ctx.data
    return (2.0 / d.n) * (d.multiplicity * x - d.y_sum)


def exact_line_search(start, end, ctx: LossContext) -> tuple[float, np.ndarray]:
    """Minimize the loss on the segment from ``start`` to ``end``.

    Returns the step in [0, 1] and the resulting point.  A zero-length
    segment (in the multiplicity-weighted norm) returns step 0.
    """
    a = _check(start, ctx)
    b = _check(end, ctx)
    d = ctx.data
    diff = b - a
    denom = float(np.dot(d.multiplicity * diff, diff))
    if denom <= 0.0:
        return 0.0, a.copy()
    eta = float(np.dot(diff, d.y_sum - d.multiplicity * a)) / denom
    eta = min(max(eta, 0.0), 1.0)
    if eta == 1.0:
        return 1.0, b.copy()
    return eta, a + eta * diff


def nmse(estimate, truth) -> float:
    """Squared Frobenius error of ``estimate`` relative to ``truth``."""
    est = np.asarray(estimate, dtype=np.float64)
    tru = np.asarray(truth, dtype=np.float64)
    if est.shape != tru.shape:
        raise ValueError(f"shape mismatch {est.shape} vs {tru.shape}")
    ref = float(np.sum(tru * tru))
    if ref == 0.0:
        raise ValueError("truth tensor has zero norm")
    diff = est - tru
    return float(np.sum(diff * diff)) / ref
