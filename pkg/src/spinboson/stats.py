"""Monte Carlo estimates, batch means and autocorrelation times."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

N_BATCHES = 32


@dataclass(frozen=True)
class Estimate:
    """A Monte Carlo result.

    ``ess`` is the effective number of independent samples behind ``mean``;
    ``n_raw`` counts the samples actually drawn.
    """

    mean: float
    stderr: float
    ess: float
    n_raw: int

    def __post_init__(self):
        if not np.isfinite(self.stderr) or self.stderr < 0:
            raise ValueError(f"stderr must be finite and >= 0, got {self.stderr}")
        if self.n_raw > 0 and not (0 < self.ess <= self.n_raw * (1 + 1e-12)):
            raise ValueError(f"ess={self.ess} must lie in (0, n_raw={self.n_raw}]")

    def sigmas_from(self, value: float, other_stderr: float = 0.0) -> float:
        """Distance to ``value`` in units of the combined standard error."""
        err = np.hypot(self.stderr, other_stderr)
        diff = abs(self.mean - value)
        if err == 0:
            return 0.0 if diff == 0 else np.inf
        return float(diff / err)

    def to_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "ess": self.ess, "n_raw": self.n_raw}

    @staticmethod
    def merge(parts: Iterable["Estimate"]) -> "Estimate":
        """Pool independent estimates of the same quantity.

        mean = sum(n_i m_i) / N, stderr^2 = sum((n_i / N)^2 s_i^2), ess = sum(ess_i).
        The rule is associative, so merging in any grouping gives the same numbers
        up to rounding; callers merge in a fixed index order for bitwise determinism.
        """
        parts = list(parts)
        if not parts:
            raise ValueError("nothing to merge")
        n = np.array([p.n_raw for p in parts], dtype=float)
        total = n.sum()
        frac = n / total
        mean = float(np.dot(frac, [p.mean for p in parts]))
        stderr = float(np.sqrt(np.dot(frac**2, np.square([p.stderr for p in parts]))))
        ess = float(sum(p.ess for p in parts))
        return Estimate(mean, stderr, ess, int(total))


def autocorrelation(x: np.ndarray) -> np.ndarray:
    """Normalized autocorrelation function via FFT."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    y = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(y, size)
    acf = np.fft.irfft(f * np.conjugate(f), size)[:n]
    if acf[0] == 0:
        out = np.zeros(n)
        out[0] = 1.0
        return out
    return acf / acf[0]


def integrated_autocorr_time(x: np.ndarray, c: float = 5.0) -> float:
    """Integrated autocorrelation time with Sokal's automatic window."""
    x = np.asarray(x, dtype=float)
    if len(x) < 4:
        return 1.0
    rho = autocorrelation(x)
    taus = 2.0 * np.cumsum(rho) - 1.0
    window = np.arange(len(taus)) < c * taus
    m = int(np.argmin(window)) if not window.all() else len(taus) - 1
    return float(max(taus[m], 1.0))


def batch_means(x: np.ndarray, n_batches: int = N_BATCHES) -> tuple[float, float]:
    """Mean and batch-means standard error of a correlated series.

    Leading samples that do not fill a whole batch are discarded from the error
    estimate only; the mean uses every sample.
    """
    x = np.asarray(x, dtype=float)
    if len(x) < 2 * n_batches:
        raise ValueError(f"need at least {2 * n_batches} samples for batch means, got {len(x)}")
    size = len(x) // n_batches
    tail = x[len(x) - size * n_batches:]
    means = tail.reshape(n_batches, size).mean(axis=1)
    return float(x.mean()), float(means.std(ddof=1) / np.sqrt(n_batches))


def batch_covariance(y: np.ndarray, n_batches: int = N_BATCHES) -> np.ndarray:
    """Covariance of the mean of a vector-valued series (rows are samples)."""
    y = np.asarray(y, dtype=float)
    size = len(y) // n_batches
    if size < 2:
        raise ValueError("series too short for batch covariance")
    tail = y[len(y) - size * n_batches:]
    means = tail.reshape(n_batches, size, -1).mean(axis=1)
    return np.atleast_2d(np.cov(means, rowvar=False, ddof=1)) / n_batches


def chain_estimate(x: Sequence[float], n_batches: int = N_BATCHES) -> Estimate:
    """Estimate from one MCMC time series: batch-means error, IAT-based ESS."""
    x = np.asarray(x, dtype=float)
    mean, err = batch_means(x, n_batches)
    ess = len(x) / integrated_autocorr_time(x)
    return Estimate(mean, err, min(ess, float(len(x))), len(x))


def iid_estimate(x: Sequence[float]) -> Estimate:
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 2:
        raise ValueError("need at least two samples")
    return Estimate(float(x.mean()), float(x.std(ddof=1) / np.sqrt(n)), float(n), n)


def weighted_estimate(log_w: np.ndarray, y: np.ndarray) -> Estimate:
    """Self-normalized importance-sampling estimate of E_w[y] (delta method error)."""
    log_w = np.asarray(log_w, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.exp(log_w - log_w.max())
    s = w.sum()
    mean = float(np.dot(w, y) / s)
    var = float(np.dot(w**2, (y - mean) ** 2) / s**2)
    ess = float(s**2 / np.dot(w, w))
    return Estimate(mean, np.sqrt(var), ess, len(y))


def kish_ess(log_w: np.ndarray) -> float:
    w = np.exp(np.asarray(log_w) - np.max(log_w))
    return float(w.sum() ** 2 / np.dot(w, w))


@dataclass(frozen=True)
class MomentVector:
    """Estimates m_k of <Y^k>, k = 1..n_max, with the covariance of the estimates."""

    values: np.ndarray
    cov: np.ndarray
    n_raw: int
    ess: float

    def __post_init__(self):
        v = np.atleast_1d(np.asarray(self.values, dtype=float))
        c = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if c.shape != (len(v), len(v)):
            raise ValueError("covariance shape does not match the moment count")
        if not np.allclose(c, c.T, rtol=1e-10, atol=1e-300):
            raise ValueError("covariance must be symmetric")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "cov", 0.5 * (c + c.T))

    @property
    def n_max(self) -> int:
        return len(self.values)

    def moment(self, k: int) -> float:
        return 1.0 if k == 0 else float(self.values[k - 1])

    @classmethod
    def exact(cls, values) -> "MomentVector":
        v = np.asarray(values, dtype=float)
        return cls(v, np.zeros((len(v), len(v))), 0, 1.0)
