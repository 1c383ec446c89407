"""State-dependent jump intensity, cumulative hazard, holding-time samplers.

The jump rate is a bounded continuous function of the location with
0 < lambda_low <= lambda(y) <= lambda_high. The holding time from (y, i)
has CDF 1 - exp(-H(y, i, t)) where H integrates the rate along the flow;
two independent samplers (CDF inversion and thinning) target that law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .flows import AffineExpFlow, FrozenFlow, Semiflow
from .state import StatePoint

HOLDING_TIME_ABS_TOL = 1e-12
THINNING_MAX_PROPOSALS = 10**6


class Intensity:
    """Jump rate y -> lambda(y), with certified positive bounds."""

    lower: float
    upper: float
    lipschitz: Optional[float] = None

    def __call__(self, y):
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantIntensity(Intensity):
    rate: float = 1.0

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("rate must be > 0")
        object.__setattr__(self, "lower", self.rate)
        object.__setattr__(self, "upper", self.rate)
        object.__setattr__(self, "lipschitz", 0.0)

    def __call__(self, y):
        return np.full_like(np.asarray(y, dtype=float), self.rate)


@dataclass(frozen=True)
class SaturatingIntensity(Intensity):
    """lambda(y) = base + gain * y / (1 + y) on y >= 0; bounds (base, base + gain)."""

    base: float = 1.0
    gain: float = 0.5

    def __post_init__(self):
        if self.base <= 0 or self.gain < 0:
            raise ValueError("need base > 0 and gain >= 0")
        object.__setattr__(self, "lower", self.base)
        object.__setattr__(self, "upper", self.base + self.gain)
        # sup |d/dy  y/(1+y)| = 1 at y = 0
        object.__setattr__(self, "lipschitz", self.gain)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        return self.base + self.gain * y / (1.0 + y)


def adaptive_simpson(f: Callable[[float], float], a: float, b: float, tol: float = 1e-10,
                     max_depth: int = 48) -> float:
    """Adaptive Simpson quadrature with Richardson acceptance test."""
    if b < a:
        raise ValueError("integration bounds out of order")
    if b == a:
        return 0.0

    def simpson(x0, x2, f0, f1, f2):
        return (x2 - x0) / 6.0 * (f0 + 4.0 * f1 + f2)

    def recurse(x0, x2, f0, f1, f2, whole, eps, depth):
        x1 = 0.5 * (x0 + x2)
        lm = 0.5 * (x0 + x1)
        rm = 0.5 * (x1 + x2)
        flm = f(lm)
        frm = f(rm)
        left = simpson(x0, x1, f0, flm, f1)
        right = simpson(x1, x2, f1, frm, f2)
        if depth <= 0:
            raise RuntimeError("adaptive quadrature did not converge")
        if abs(left + right - whole) <= 15.0 * eps:
            return left + right + (left + right - whole) / 15.0
        return (
            recurse(x0, x1, f0, flm, f1, left, 0.5 * eps, depth - 1)
            + recurse(x1, x2, f1, frm, f2, right, 0.5 * eps, depth - 1)
        )

    mid = 0.5 * (a + b)
    fa, fm, fb = f(a), f(mid), f(b)
    whole = simpson(a, b, fa, fm, fb)
    return recurse(a, b, fa, fm, fb, whole, tol, max_depth)


def closed_form_hazard(flow: Semiflow, intensity: Intensity):
    """Exact cumulative hazard for the shipped flow/intensity pairs, else None.

    Returns a callable (i, t, y) -> integral of lambda(S_i(h, y)) over [0, t],
    broadcasting over numpy arrays in t and/or y.
    """
    if isinstance(intensity, ConstantIntensity):
        rate = intensity.rate

        def const_hazard(i, t, y):
            t = np.asarray(t, dtype=float)
            y = np.asarray(y, dtype=float)
            return np.broadcast_arrays(rate * t, y)[0].copy()

        return const_hazard
    if isinstance(intensity, SaturatingIntensity) and isinstance(flow, AffineExpFlow):
        base, gain = intensity.base, intensity.gain
        rates, anchors = flow.rates, flow.anchors

        def saturating_hazard(i, t, y):
            # integral of base + gain*(c+w)/(1+c+w) along w_h = (y-c) e^{-kappa h}
            kappa, c = rates[i], anchors[i]
            t = np.asarray(t, dtype=float)
            y = np.asarray(y, dtype=float)
            w0 = y - c
            wt = w0 * np.exp(-kappa * t)
            inv_term = (kappa * t + np.log((1.0 + c + wt) / (1.0 + c + w0))) / (kappa * (1.0 + c))
            return (base + gain) * t - gain * inv_term

        return saturating_hazard
    if isinstance(intensity, SaturatingIntensity) and isinstance(flow, FrozenFlow):
        def frozen_hazard(i, t, y):
            t = np.asarray(t, dtype=float)
            return intensity(y) * t

        return frozen_hazard
    return None


@dataclass(frozen=True)
class CumulativeHazard:
    """Cumulative hazard H(y, i, t) of the holding-time law along the flow.

    Uses the exact antiderivative when one is registered for the
    flow/intensity pair, otherwise adaptive Simpson at ``quad_tol``.
    """

    intensity: Intensity
    flow: Semiflow
    closed_form: Optional[Callable] = None
    quad_tol: float = 1e-10

    @classmethod
    def for_model(cls, flow: Semiflow, intensity: Intensity, quad_tol: float = 1e-10):
        return cls(intensity=intensity, flow=flow,
                   closed_form=closed_form_hazard(flow, intensity), quad_tol=quad_tol)

    def value(self, i: int, t, y):
        """H(y, i, t); broadcasts over arrays. Rejects t < 0."""
        if np.any(np.asarray(t) < 0):
            raise ValueError("hazard time must be >= 0")
        if self.closed_form is not None:
            return self.closed_form(i, t, y)
        return self._quadrature(i, t, y)

    def _quadrature(self, i, t, y):
        t_arr = np.asarray(t, dtype=float)
        y_arr = np.asarray(y, dtype=float)
        tb, yb = np.broadcast_arrays(t_arr, y_arr)
        out = np.empty(tb.shape, dtype=float)
        it = np.nditer(tb, flags=["multi_index"])
        for tv in it:
            yv = float(yb[it.multi_index])
            out[it.multi_index] = adaptive_simpson(
                lambda h: float(self.intensity(self.flow.evaluate(i, h, yv))),
                0.0, float(tv), self.quad_tol,
            )
        if out.shape == ():
            return float(out)
        return out

    def survival(self, i: int, t, y):
        """P(holding time > t) = exp(-H(y, i, t)) in (0, 1]."""
        return np.exp(-np.asarray(self.value(i, t, y), dtype=float))


def cumulative_hazard(h: CumulativeHazard, x: StatePoint, t: float) -> float:
    return float(h.value(x.i, t, x.y))


def survival(h: CumulativeHazard, x: StatePoint, t: float) -> float:
    return float(h.survival(x.i, t, x.y))


def invert_holding(h: CumulativeHazard, i: int, ys: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Solve H(y, i, t) = target elementwise by bracketed bisection.

    The rate bounds guarantee the bracket [target/upper, target/lower];
    bisection on a monotone hazard needs no derivative. A final residual
    check guards against hazards inconsistent with their declared bounds.
    """
    ys = np.asarray(ys, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if np.any(targets < 0):
        raise ValueError("hazard targets must be >= 0")
    if isinstance(h.intensity, ConstantIntensity):
        return targets / h.intensity.rate
    lo = targets / h.intensity.upper
    hi = targets / h.intensity.lower
    while True:
        mid = 0.5 * (lo + hi)
        above = np.asarray(h.value(i, mid, ys)) > targets
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
        if float(np.max(hi - lo, initial=0.0)) < HOLDING_TIME_ABS_TOL:
            break
    out = 0.5 * (lo + hi)
    residual = np.abs(np.asarray(h.value(i, out, ys)) - targets)
    worst = int(np.argmax(residual)) if residual.size else 0
    if residual.size and residual.flat[worst] > 1e-8 * (1.0 + targets.flat[worst]):
        raise RuntimeError(
            f"hazard inversion missed its target by {residual.flat[worst]:.3e} "
            f"(bracket [{lo.flat[worst]:.6g}, {hi.flat[worst]:.6g}], "
            f"target {targets.flat[worst]:.6g}); are the declared rate bounds valid?")
    return out


def sample_holding_inversion(h: CumulativeHazard, x: StatePoint, u: float) -> float:
    """Quantile of the holding-time law at u in (0, 1) via hazard inversion."""
    if not 0.0 < u < 1.0:
        raise ValueError("u must lie strictly inside (0, 1)")
    target = -math.log1p(-u)
    return float(invert_holding(h, x.i, np.array([x.y]), np.array([target]))[0])


def sample_holding_thinning(h: CumulativeHazard, x: StatePoint,
                            rng: np.random.Generator,
                            max_proposals: int = THINNING_MAX_PROPOSALS) -> float:
    """First event of the rate-lambda(S_i(., y)) clock via thinning.

    Proposes Exp(upper-rate) increments along the flow and accepts with
    probability lambda(flow point)/upper; terminates a.s. because the rate
    is bounded below. The proposal cap flags misconfigured bounds.
    """
    upper = h.intensity.upper
    t = 0.0
    for _ in range(max_proposals):
        t += rng.exponential(1.0 / upper)
        point = h.flow.evaluate(x.i, t, x.y)
        if rng.random() * upper <= float(h.intensity(point)):
            return t
    raise RuntimeError(f"thinning failed to accept within {max_proposals} proposals; "
                       "check the declared intensity bounds")


def sample_holding_thinning_vec(h: CumulativeHazard, i: int, ys: np.ndarray,
                                rng: np.random.Generator,
                                max_rounds: int = 10_000) -> np.ndarray:
    """Vectorized thinning: one holding time per entry of ``ys``."""
    ys = np.asarray(ys, dtype=float)
    upper = h.intensity.upper
    t = np.zeros(ys.shape, dtype=float)
    pending = np.ones(ys.shape, dtype=bool)
    for _ in range(max_rounds):
        idx = np.flatnonzero(pending)
        if idx.size == 0:
            return t
        t[idx] += rng.exponential(1.0 / upper, size=idx.size)
        points = h.flow.evaluate(i, t[idx], ys[idx])
        accept = rng.random(idx.size) * upper <= h.intensity(points)
        pending[idx[accept]] = False
    raise RuntimeError("thinning exceeded the proposal budget; check intensity bounds")
