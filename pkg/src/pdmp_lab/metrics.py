"""Distances between weighted empirical measures on the product state space.

The headline quantity is the exact 1-D Wasserstein-1 distance per regime,
combined into a product-space score, bracketed from below by a dictionary
estimate of the bounded-Lipschitz distance. Kolmogorov-Smirnov statistics
validate samplers against analytic laws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .state import WeightedEmpiricalMeasure

MASS_MATCH_TOL = 1e-9


def wasserstein1_1d(values_a: np.ndarray, weights_a: np.ndarray,
                    values_b: np.ndarray, weights_b: np.ndarray) -> float:
    """Exact W1 between weighted atom sets on the line.

    Computed as the area between the two CDFs over the merged support.
    Total masses must agree to within MASS_MATCH_TOL (normalize first).
    """
    values_a = np.asarray(values_a, dtype=float)
    values_b = np.asarray(values_b, dtype=float)
    weights_a = np.asarray(weights_a, dtype=float)
    weights_b = np.asarray(weights_b, dtype=float)
    mass_a, mass_b = weights_a.sum(), weights_b.sum()
    if abs(mass_a - mass_b) > MASS_MATCH_TOL * max(mass_a, mass_b, 1.0):
        raise ValueError(f"total masses differ: {mass_a} vs {mass_b}")
    if values_a.size == 0 or values_b.size == 0:
        raise ValueError("empty atom set")
    pos = np.concatenate([values_a, values_b])
    contrib = np.concatenate([weights_a / mass_a, -weights_b / mass_b])
    order = np.argsort(pos, kind="mergesort")
    pos = pos[order]
    cdf_gap = np.cumsum(contrib[order])[:-1]
    return float(np.dot(np.abs(cdf_gap), np.diff(pos))) * mass_a


def ks_statistic(samples_a: np.ndarray, samples_b: Optional[np.ndarray] = None,
                 cdf: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> float:
    """Sup-norm of the empirical CDF difference.

    One-sample form against an analytic CDF, or two-sample form when a
    second sample set is given.
    """
    a = np.sort(np.asarray(samples_a, dtype=float))
    if a.size == 0:
        raise ValueError("empty sample set")
    if (samples_b is None) == (cdf is None):
        raise ValueError("give exactly one of samples_b or cdf")
    if cdf is not None:
        grid = np.arange(1, a.size + 1) / a.size
        f = np.asarray(cdf(a), dtype=float)
        return float(max(np.abs(grid - f).max(), np.abs(grid - 1.0 / a.size - f).max()))
    b = np.sort(np.asarray(samples_b, dtype=float))
    pooled = np.concatenate([a, b])
    ca = np.searchsorted(a, pooled, side="right") / a.size
    cb = np.searchsorted(b, pooled, side="right") / b.size
    return float(np.abs(ca - cb).max())


def ks_statistic_weighted(values_a, weights_a, values_b, weights_b) -> float:
    """Two-sample KS between weighted (self-normalized) empirical CDFs."""
    va = np.asarray(values_a, dtype=float)
    vb = np.asarray(values_b, dtype=float)
    wa = np.asarray(weights_a, dtype=float)
    wb = np.asarray(weights_b, dtype=float)
    oa, ob = np.argsort(va, kind="mergesort"), np.argsort(vb, kind="mergesort")
    va, wa = va[oa], np.cumsum(wa[oa]) / wa.sum()
    vb, wb = vb[ob], np.cumsum(wb[ob]) / wb.sum()
    pooled = np.concatenate([va, vb])
    ia = np.searchsorted(va, pooled, side="right")
    ib = np.searchsorted(vb, pooled, side="right")
    ca = np.where(ia > 0, wa[np.maximum(ia - 1, 0)], 0.0)
    cb = np.where(ib > 0, wb[np.maximum(ib - 1, 0)], 0.0)
    return float(np.abs(ca - cb).max())


def effective_sample_size(weights: np.ndarray) -> float:
    w = np.asarray(weights, dtype=float)
    return float(w.sum() ** 2 / np.dot(w, w))


def ks_critical(n: float, m: Optional[float] = None, alpha: float = 0.01) -> float:
    """Asymptotic KS critical value c(alpha) * sqrt(1/n [+ 1/m])."""
    c = math.sqrt(-0.5 * math.log(alpha / 2.0))
    scale = 1.0 / n if m is None else 1.0 / n + 1.0 / m
    return c * math.sqrt(scale)


def _ramp_dictionary(values: np.ndarray, n_anchors: int) -> list[Callable[[np.ndarray], np.ndarray]]:
    anchors = np.linspace(values.min(), values.max(), n_anchors)
    fns = []
    for a in anchors:
        fns.append(lambda y, a=a: np.clip(y - a, -1.0, 1.0))
        fns.append(lambda y, a=a: np.clip(a - y, -1.0, 1.0))
    return fns


def bl_lower_bound(mu: WeightedEmpiricalMeasure, nu: WeightedEmpiricalMeasure,
                   n_anchors: int = 64) -> float:
    """Dictionary lower bound on the bounded-Lipschitz distance.

    Maximizes |<f, mu> - <f, nu>| over clamped affine ramps through a grid
    of anchors, crossed with regime indicators. Every dictionary member is
    1-Lipschitz for the product metric and bounded by 1, so the value is a
    valid lower bound of the true distance.
    """
    mu, nu = mu.normalize(), nu.normalize()
    values = np.concatenate([mu.ys, nu.ys])
    regimes = sorted(set(np.unique(mu.regimes)) | set(np.unique(nu.regimes)))
    best = 0.0
    for f in _ramp_dictionary(values, n_anchors):
        gap = abs(float(np.dot(mu.weights, f(mu.ys)) - np.dot(nu.weights, f(nu.ys))))
        best = max(best, gap)
        for i in regimes:
            ya, wa = mu.restrict_regime(i)
            yb, wb = nu.restrict_regime(i)
            ga = float(np.dot(wa, f(ya))) if ya.size else 0.0
            gb = float(np.dot(wb, f(yb))) if yb.size else 0.0
            best = max(best, abs(ga - gb))
    return best


@dataclass(frozen=True)
class DistanceReport:
    """Product-space distance bracket between two probability measures.

    combined = sum_i min(mass_i) * W1(conditional_i) + gap * sum_i |mass gap|
    upper-bounds every dictionary member's action, while ``bl_lower`` bounds
    the bounded-Lipschitz distance from below.
    """

    per_regime_w1: dict[int, float]
    regime_mass_gap: float
    combined: float
    bl_lower: float

    def to_json(self) -> dict:
        return {
            "per_regime_w1": {str(k): v for k, v in sorted(self.per_regime_w1.items())},
            "regime_mass_gap": self.regime_mass_gap,
            "combined": self.combined,
            "bl_lower": self.bl_lower,
        }


def measure_distance(mu: WeightedEmpiricalMeasure, nu: WeightedEmpiricalMeasure,
                     n_regimes: Optional[int] = None, regime_gap: float = 1.0,
                     n_anchors: int = 64) -> DistanceReport:
    """Per-regime W1 composite plus the dictionary lower bound."""
    mu, nu = mu.normalize(), nu.normalize()
    if n_regimes is None:
        n_regimes = int(max(mu.regimes.max(initial=0), nu.regimes.max(initial=0))) + 1
    mass_mu = mu.regime_mass(n_regimes)
    mass_nu = nu.regime_mass(n_regimes)
    per_regime = {}
    combined = 0.0
    for i in range(n_regimes):
        shared = min(mass_mu[i], mass_nu[i])
        if shared > 0:
            ya, wa = mu.restrict_regime(i)
            yb, wb = nu.restrict_regime(i)
            w1 = wasserstein1_1d(ya, wa / wa.sum(), yb, wb / wb.sum())
            per_regime[i] = w1
            combined += shared * w1
    mass_gap = float(np.abs(mass_mu - mass_nu).sum())
    combined += regime_gap * mass_gap
    bl = bl_lower_bound(mu, nu, n_anchors=n_anchors)
    if bl > combined + 1e-9:
        raise AssertionError(
            f"dictionary lower bound {bl} exceeds the combined score {combined}")
    return DistanceReport(per_regime_w1=per_regime, regime_mass_gap=mass_gap,
                          combined=combined, bl_lower=bl)
