"""Core state and measure types shared by every other module.

The state space is a product of a 1-D location interval and a finite set of
regime labels. Measures are finite weighted atom sets; they are the common
currency passed between the simulator, the measure transforms and the
finite-grid oracle.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

REGIME_GAP = 1.0
"""Default distance contributed by a regime mismatch in the product metric."""


@dataclass(frozen=True)
class StatePoint:
    """A point (y, i): location ``y`` together with a regime label ``i``."""

    y: float
    i: int = 0

    def __post_init__(self):
        if not np.isfinite(self.y):
            raise ValueError(f"location must be finite, got {self.y!r}")
        if int(self.i) != self.i or self.i < 0:
            raise ValueError(f"regime label must be a nonnegative integer, got {self.i!r}")


@dataclass(frozen=True)
class ExtendedState:
    """A state point plus the cumulative jump clock ``s >= 0``."""

    x: StatePoint
    s: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.s) or self.s < 0:
            raise ValueError(f"jump clock must be finite and >= 0, got {self.s!r}")


def metric(x1: StatePoint, x2: StatePoint, regime_gap: float = REGIME_GAP) -> float:
    """Product metric: |y1 - y2| plus ``regime_gap`` when the regimes differ."""
    return abs(x1.y - x2.y) + (regime_gap if x1.i != x2.i else 0.0)


@dataclass(frozen=True)
class LyapunovFunction:
    """Distance of the location coordinate to a fixed anchor; regime-blind.

    Evaluates to 0 at (anchor, i) for every regime i and is nonnegative
    everywhere, which makes it a valid drift/moment gauge for the chain.
    """

    anchor: float = 0.0

    def __call__(self, x: StatePoint) -> float:
        return abs(x.y - self.anchor)

    def values(self, ys: np.ndarray) -> np.ndarray:
        return np.abs(np.asarray(ys, dtype=float) - self.anchor)


def lyapunov_value(v: LyapunovFunction, x: StatePoint) -> float:
    return v(x)


class ZeroMassError(ValueError):
    """Raised when a transform or normalization receives an empty measure.

    Transforms of non-zero measures are non-zero by construction, so hitting
    this signals a bug upstream rather than a legitimate input.
    """


@dataclass(frozen=True)
class WeightedEmpiricalMeasure:
    """A finite weighted atom set over the product state space.

    Atoms are stored as parallel arrays (locations, regimes, weights).
    Weights are nonnegative and unnormalized by default; several transforms
    deliberately produce sub- or super-probability masses, so normalization
    is an explicit step.
    """

    ys: np.ndarray
    regimes: np.ndarray
    weights: np.ndarray
    total_mass: float = field(init=False)

    def __post_init__(self):
        ys = np.ascontiguousarray(self.ys, dtype=float)
        regimes = np.ascontiguousarray(self.regimes, dtype=np.int64)
        weights = np.ascontiguousarray(self.weights, dtype=float)
        if not (ys.ndim == regimes.ndim == weights.ndim == 1):
            raise ValueError("atom arrays must be 1-D")
        if not (ys.size == regimes.size == weights.size):
            raise ValueError("atom arrays must have equal length")
        if not np.isfinite(ys).all():
            raise ValueError("atom locations must be finite")
        if not np.isfinite(weights).all() or (weights < 0).any():
            raise ValueError("weights must be finite and >= 0")
        object.__setattr__(self, "ys", ys)
        object.__setattr__(self, "regimes", regimes)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "total_mass", float(weights.sum()))

    @classmethod
    def from_atoms(cls, atoms: Iterable[tuple[StatePoint, float]]) -> "WeightedEmpiricalMeasure":
        pts = list(atoms)
        return cls(
            ys=np.array([p.y for p, _ in pts], dtype=float),
            regimes=np.array([p.i for p, _ in pts], dtype=np.int64),
            weights=np.array([w for _, w in pts], dtype=float),
        )

    @classmethod
    def from_samples(cls, ys, regimes=None, weights=None) -> "WeightedEmpiricalMeasure":
        ys = np.asarray(ys, dtype=float)
        if regimes is None:
            regimes = np.zeros(ys.size, dtype=np.int64)
        if weights is None:
            weights = np.ones(ys.size, dtype=float)
        return cls(ys=ys, regimes=np.asarray(regimes), weights=np.asarray(weights))

    @property
    def n_atoms(self) -> int:
        return self.ys.size

    def integrate(self, f: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> float:
        """<f, mu> = sum of w_k f(y_k, i_k); f must be finite on every atom."""
        vals = np.broadcast_to(np.asarray(f(self.ys, self.regimes), dtype=float), self.ys.shape)
        if not np.isfinite(vals).all():
            raise ValueError("integrand is non-finite on some atom")
        return float(np.dot(self.weights, vals))

    def normalize(self) -> "WeightedEmpiricalMeasure":
        if self.total_mass <= 0.0:
            raise ZeroMassError("cannot normalize a zero-mass measure")
        return WeightedEmpiricalMeasure(self.ys, self.regimes, self.weights / self.total_mass)

    def mean_location(self) -> float:
        if self.total_mass <= 0.0:
            raise ZeroMassError("mean of a zero-mass measure is undefined")
        return float(np.dot(self.weights, self.ys) / self.total_mass)

    def regime_mass(self, n_regimes: int) -> np.ndarray:
        return np.bincount(self.regimes, weights=self.weights, minlength=n_regimes)

    def restrict_regime(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Locations and weights of the atoms carried by regime ``i``."""
        mask = self.regimes == i
        return self.ys[mask], self.weights[mask]

    @classmethod
    def merge(cls, measures: Sequence["WeightedEmpiricalMeasure"]) -> "WeightedEmpiricalMeasure":
        """Associative concatenation; order affects only float round-off."""
        return cls(
            ys=np.concatenate([m.ys for m in measures]),
            regimes=np.concatenate([m.regimes for m in measures]),
            weights=np.concatenate([m.weights for m in measures]),
        )

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["y", "i", "weight"])
            for y, i, w in zip(self.ys, self.regimes, self.weights):
                writer.writerow([f"{y:.17g}", int(i), f"{w:.17g}"])

    @classmethod
    def from_csv(cls, path) -> "WeightedEmpiricalMeasure":
        ys, regimes, weights = [], [], []
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                ys.append(float(row["y"]))
                regimes.append(int(row["i"]))
                weights.append(float(row["weight"]))
        return cls(np.array(ys), np.array(regimes, dtype=np.int64), np.array(weights))
