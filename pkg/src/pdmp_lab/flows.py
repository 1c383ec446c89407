"""Deterministic motion between jumps: semiflows in closed form.

Flows are supplied in closed form rather than integrated from vector fields,
so flow evaluation is exact and no ODE-solver error leaks into the hazard
inversion. An ODE-backed flow would slot in behind the same interface.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np


class Semiflow:
    """Per-regime motion (i, t, y) -> y' with the semigroup property.

    Subclasses implement ``evaluate`` (numpy broadcasting over t and/or y)
    and may declare a contraction envelope (lipschitz, rate) meaning
    |S_i(t,u) - S_i(t,v)| <= lipschitz * exp(rate * t) * |u - v|.
    """

    n_regimes: int = 1
    contraction: Optional[tuple[float, float]] = None

    def evaluate(self, i: int, t, y):
        raise NotImplementedError

    def check_regime(self, i: int) -> None:
        if not 0 <= i < self.n_regimes:
            raise ValueError(f"regime {i} outside 0..{self.n_regimes - 1}")


@dataclass(frozen=True)
class AffineExpFlow(Semiflow):
    """Exponential relaxation toward per-regime attractors.

    Regime i moves as c_i + (y - c_i) * exp(-kappa_i * t): contraction with
    lipschitz 1 and rate -min(kappa).
    """

    rates: tuple[float, ...] = (1.0,)
    anchors: tuple[float, ...] = (0.0,)

    def __post_init__(self):
        if len(self.rates) != len(self.anchors):
            raise ValueError("rates and anchors must pair up")
        if any(k <= 0 for k in self.rates):
            raise ValueError("decay rates must be > 0")
        object.__setattr__(self, "n_regimes", len(self.rates))
        object.__setattr__(self, "contraction", (1.0, -min(self.rates)))

    def evaluate(self, i: int, t, y):
        # written as y*decay + c*(1-decay) so S(0, y) returns y exactly
        self.check_regime(i)
        c = self.anchors[i]
        decay = np.exp(-self.rates[i] * np.asarray(t, dtype=float))
        return np.asarray(y, dtype=float) * decay + c * (1.0 - decay)


@dataclass(frozen=True)
class FrozenFlow(Semiflow):
    """Identity motion S_i(t, y) = y; isometry with rate 0."""

    n_regimes: int = 1

    def __post_init__(self):
        object.__setattr__(self, "contraction", (1.0, 0.0))

    def evaluate(self, i: int, t, y):
        self.check_regime(i)
        return np.broadcast_arrays(np.asarray(y, dtype=float), np.asarray(t, dtype=float))[0].copy()


@dataclass(frozen=True)
class ExpandingFlow(Semiflow):
    """Exponential blow-up y * exp(rate * t); negative-control flow."""

    rate: float = 1.0
    n_regimes: int = 1

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("expansion rate must be > 0")
        object.__setattr__(self, "contraction", (1.0, self.rate))

    def evaluate(self, i: int, t, y):
        self.check_regime(i)
        return np.asarray(y, dtype=float) * np.exp(self.rate * np.asarray(t, dtype=float))


def flow_evaluate(flow: Semiflow, i: int, t, y):
    """S_i(t, y) for t >= 0; rejects negative times."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("flow time must be >= 0")
    return flow.evaluate(i, t, y)


@dataclass(frozen=True)
class SemigroupReport:
    max_violation: float
    n_samples: int
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.tol


def check_semigroup(
    flow: Semiflow,
    n_samples: int = 10_000,
    tol: float = 1e-10,
    rng: Optional[np.random.Generator] = None,
    y_range: tuple[float, float] = (0.0, 15.0),
    t_range: tuple[float, float] = (0.0, 3.0),
) -> SemigroupReport:
    """Probe S_i(s, S_i(t, y)) = S_i(s + t, y) on random (s, t, y, i) triples.

    Violations are reported, not raised: the caller decides what is fatal.
    """
    if tol <= 0:
        raise ValueError("tol must be > 0")
    rng = np.random.default_rng(0) if rng is None else rng
    ys = rng.uniform(*y_range, size=n_samples)
    ss = rng.uniform(*t_range, size=n_samples)
    ts = rng.uniform(*t_range, size=n_samples)
    regimes = rng.integers(0, flow.n_regimes, size=n_samples)
    worst = 0.0
    for i in range(flow.n_regimes):
        mask = regimes == i
        if not mask.any():
            continue
        two_step = flow.evaluate(i, ss[mask], flow.evaluate(i, ts[mask], ys[mask]))
        one_step = flow.evaluate(i, ss[mask] + ts[mask], ys[mask])
        worst = max(worst, float(np.abs(two_step - one_step).max()))
    return SemigroupReport(max_violation=worst, n_samples=n_samples, tol=tol)
