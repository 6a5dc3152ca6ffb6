"""The Ising pair interaction W(t) = sum_j w_j exp(-omega_j |t|)."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import ModeSet

# below this value of omega*L the diagonal-square formula uses its Taylor series
TAYLOR_CUTOFF = 1e-3


def phi2(x):
    """x - 1 + exp(-x), accurate for small x."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < TAYLOR_CUTOFF
    xs = np.where(small, x, 0.0)
    series = xs * xs * (0.5 - xs * (1.0 / 6.0 - xs * (1.0 / 24.0 - xs / 120.0)))
    return np.where(small, series, x + np.expm1(-np.where(small, 1.0, x)))


def one_minus_exp(x):
    """1 - exp(-x)."""
    return -np.expm1(-np.asarray(x, dtype=float))


@dataclass(frozen=True)
class ExpSumKernel:
    weights: np.ndarray
    rates: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        r = np.atleast_1d(np.asarray(self.rates, dtype=float))
        if w.shape != r.shape or w.ndim != 1 or len(w) == 0:
            raise ValueError("weights and rates must be non-empty 1-d arrays of equal length")
        if np.any(w < 0) or np.any(r <= 0):
            raise ValueError("weights must be >= 0 and rates > 0")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "rates", r)

    @classmethod
    def from_modes(cls, modes: ModeSet) -> "ExpSumKernel":
        return cls(modes.couplings**2 / 4.0, modes.omegas)

    @property
    def is_zero(self) -> bool:
        return not np.any(self.weights)

    def __call__(self, t):
        return self.eval(t)

    def eval(self, t):
        t = np.abs(np.asarray(t, dtype=float))
        out = np.exp(-np.multiply.outer(t, self.rates)) @ self.weights
        return float(out) if out.ndim == 0 else out

    def scaled(self, factor: float) -> "ExpSumKernel":
        return ExpSumKernel(self.weights * factor, self.rates)

    def l1_norm(self) -> float:
        """Integral of W over the real line."""
        return float(np.sum(2.0 * self.weights / self.rates))

    def rect_integral(self, interval1, interval2) -> float:
        """Exact value of int_a^b int_c^d W(t - s) ds dt."""
        a, b = map(float, interval1)
        c, d = map(float, interval2)
        if b < a or d < c:
            raise ValueError(f"reversed interval: {interval1}, {interval2}")
        lo, hi = max(a, c), min(b, d)
        if lo >= hi:
            return self._disjoint(a, b, c, d)
        total = self._square(hi - lo)
        # pieces of each interval to the left and right of the overlap
        left1, right1 = (a, lo), (hi, b)
        left2, right2 = (c, lo), (hi, d)
        overlap = (lo, hi)
        for p, q in ((left1, overlap), (overlap, left2), (right1, overlap), (overlap, right2),
                     (left1, right2), (right1, left2)):
            if p[1] > p[0] and q[1] > q[0]:
                total += self._disjoint(p[0], p[1], q[0], q[1])
        return float(total)

    def _square(self, length: float) -> float:
        w, om = self.weights, self.rates
        return float(np.sum(2.0 * w * phi2(om * length) / om**2))

    def _disjoint(self, a, b, c, d) -> float:
        if b - a <= 0 or d - c <= 0:
            return 0.0
        if c >= b:  # second interval to the right; W is even
            a, b, c, d = c, d, a, b
        gap = a - d
        w, om = self.weights, self.rates
        terms = w / om**2 * np.exp(-om * gap) * one_minus_exp(om * (b - a)) * one_minus_exp(om * (d - c))
        return float(np.sum(terms))

    # --- io ----------------------------------------------------------------

    def to_pairs(self) -> list[list[float]]:
        return [[float(w), float(o)] for w, o in zip(self.weights, self.rates)]

    @classmethod
    def from_pairs(cls, pairs) -> "ExpSumKernel":
        arr = np.asarray(pairs, dtype=float).reshape(-1, 2)
        return cls(arr[:, 0], arr[:, 1])

    def dump(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump({"terms": self.to_pairs()}, fh, indent=2)

    @classmethod
    def load(cls, path: str | Path) -> "ExpSumKernel":
        with open(path) as fh:
            return cls.from_pairs(json.load(fh)["terms"])

    def write_csv(self, path: str | Path, grid) -> None:
        grid = np.asarray(grid, dtype=float)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "W"])
            for t, val in zip(grid, np.atleast_1d(self.eval(grid))):
                writer.writerow([repr(float(t)), repr(float(val))])
