"""Partition combinatorics, cumulants, energy derivatives and infinite-T extrapolation."""
from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .gibbs import GibbsParams, moments_of_time_integral
from .kernel import ExpSumKernel
from .model import ContinuousModel, discretize
from .stats import Estimate, MomentVector

__all__ = [
    "SetPartition", "MomentVector", "set_partitions", "bell_number", "log_derivative", "ursell",
    "ursell_joint", "energy_derivative", "LadderFit", "susceptibility", "bloch_extrapolate",
    "SweepRow", "MassSweep", "mass_sweep", "lambda_c", "DEFAULT_LADDER", "DEFAULT_EPSILON",
]

MAX_PARTITION_N = 12
DEFAULT_MAX_ORDER = 4
DEFAULT_LADDER = (5.0, 10.0, 20.0, 40.0)
# non-constructive constant; this value only fixes a test window
DEFAULT_EPSILON = 0.5


@dataclass(frozen=True)
class SetPartition:
    """Blocks of {1..n}, each block sorted, blocks ordered by their smallest element."""

    blocks: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        blocks = tuple(sorted((tuple(sorted(b)) for b in self.blocks), key=lambda b: b[0] if b else 0))
        if any(len(b) == 0 for b in blocks):
            raise ValueError("blocks must be non-empty")
        items = [i for b in blocks for i in b]
        if sorted(items) != list(range(1, len(items) + 1)):
            raise ValueError("blocks must be disjoint and cover {1..n}")
        object.__setattr__(self, "blocks", blocks)

    @property
    def n(self) -> int:
        return sum(len(b) for b in self.blocks)

    def __len__(self):
        return len(self.blocks)

    def block_sizes(self) -> tuple[int, ...]:
        return tuple(len(b) for b in self.blocks)


def set_partitions(n: int) -> list[SetPartition]:
    """All partitions of {1..n}, generated from restricted growth strings."""
    if not 1 <= n <= MAX_PARTITION_N:
        raise ValueError(f"n must lie in [1, {MAX_PARTITION_N}]")
    out: list[SetPartition] = []
    a = [0] * n

    def rec(i: int, m: int):
        if i == n:
            blocks: list[list[int]] = [[] for _ in range(m + 1)]
            for idx, label in enumerate(a):
                blocks[label].append(idx + 1)
            out.append(SetPartition(tuple(tuple(b) for b in blocks)))
            return
        for label in range(m + 2):
            a[i] = label
            rec(i + 1, max(m, label))

    a[0] = 0
    rec(1, 0)
    return out


def bell_number(n: int) -> int:
    row = [1]
    for _ in range(n):
        nxt = [row[-1]]
        for x in row:
            nxt.append(nxt[-1] + x)
        row = nxt
    return row[0]


def _integer_partitions(n: int, largest: int | None = None):
    largest = n if largest is None else largest
    if n == 0:
        yield ()
        return
    for k in range(min(n, largest), 0, -1):
        for rest in _integer_partitions(n - k, k):
            yield (k,) + rest


def _set_partition_count(sizes: tuple[int, ...]) -> int:
    """Number of set partitions of {1..sum} with the given multiset of block sizes."""
    n = sum(sizes)
    denom = 1
    for k, mult in Counter(sizes).items():
        denom *= math.factorial(k) ** mult * math.factorial(mult)
    return math.factorial(n) // denom


def log_derivative(g_derivs: Sequence[float]) -> float:
    """n-th derivative of ln g from (g, g', ..., g^(n)) by the partition formula."""
    g = [float(x) for x in g_derivs]
    if len(g) < 2:
        raise ValueError("need g and at least one derivative")
    if not g[0] > 0:
        raise ValueError("g must be > 0")
    n = len(g) - 1
    total = 0.0
    for p in set_partitions(n):
        k = len(p)
        total += (-1) ** (k - 1) * math.factorial(k - 1) * math.prod(g[s] for s in p.block_sizes()) / g[0] ** k
    return total


def ursell(moments: MomentVector | Sequence[float], n: int | None = None) -> Estimate:
    """n-th cumulant of a single variable from its raw moments m_1..m_n.

    Uses the grouped (integer-partition) form of the set-partition sum; the
    error comes from the gradient of that polynomial against the moment covariance.
    """
    mv = moments if isinstance(moments, MomentVector) else MomentVector.exact(moments)
    n = mv.n_max if n is None else n
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > mv.n_max:
        raise ValueError(f"cumulant of order {n} needs moments up to {n}, have {mv.n_max}")
    m = np.concatenate(([1.0], np.asarray(mv.values, dtype=float)))
    value = 0.0
    grad = np.zeros(mv.n_max)
    for sizes in _integer_partitions(n):
        k = len(sizes)
        coef = (-1) ** (k - 1) * math.factorial(k - 1) * _set_partition_count(sizes)
        value += coef * math.prod(m[s] for s in sizes)
        for s, mult in Counter(sizes).items():
            grad[s - 1] += coef * mult * _prod_without(m, sizes, s)
    var = float(grad @ mv.cov @ grad)
    return Estimate(float(value), math.sqrt(max(var, 0.0)), mv.ess, mv.n_raw)


def _prod_without(m: np.ndarray, sizes: tuple[int, ...], s: int) -> float:
    rest = list(sizes)
    rest.remove(s)
    return math.prod(m[t] for t in rest)


def ursell_joint(joint_moment: Callable[[tuple[int, ...]], float] | Mapping[tuple[int, ...], float],
                 n: int) -> float:
    """Joint cumulant u_n(Y_1..Y_n) from joint moments E[prod_{i in B} Y_i]."""
    get = joint_moment.__getitem__ if isinstance(joint_moment, Mapping) else joint_moment
    total = 0.0
    for p in set_partitions(n):
        k = len(p)
        total += (-1) ** (k - 1) * math.factorial(k - 1) * math.prod(get(b) for b in p.blocks)
    return total


def energy_derivative(moments: MomentVector, n: int, T: float,
                      max_order: int = DEFAULT_MAX_ORDER) -> Estimate:
    """Finite-T estimate of the n-th mu-derivative of the ground state energy.

    (1/T) sum over partitions P of {1..n} of (-1)^{|P|+n} (|P|-1)! prod_B m_|B|,
    with m_k = <(int_0^T X dt)^k>. Orders above ``max_order`` must be requested
    explicitly because their variance grows quickly.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > max_order:
        raise ValueError(f"order {n} exceeds max_order={max_order}; raise it explicitly")
    if n > moments.n_max:
        raise ValueError(f"order {n} needs moments up to {n}, have {moments.n_max}")
    if not T > 0:
        raise ValueError("T must be > 0")
    m = np.concatenate(([1.0], np.asarray(moments.values, dtype=float)))
    value = 0.0
    grad = np.zeros(moments.n_max)
    for p in set_partitions(n):
        k = len(p)
        coef = (-1) ** (k + n) * math.factorial(k - 1)
        sizes = p.block_sizes()
        value += coef * math.prod(m[s] for s in sizes)
        for i, s in enumerate(sizes):
            grad[s - 1] += coef * math.prod(m[t] for j, t in enumerate(sizes) if j != i)
    var = float(grad @ moments.cov @ grad)
    return Estimate(value / T, math.sqrt(max(var, 0.0)) / T, moments.ess, moments.n_raw)


# --- extrapolation in T ------------------------------------------------------------------


@dataclass
class LadderFit:
    """Weighted least-squares fit y_T = limit + slope / T."""

    T: tuple[float, ...]
    values: tuple[float, ...]
    stderrs: tuple[float, ...]
    limit: Estimate
    slope: float
    slope_stderr: float
    chi2: float
    points: list[Estimate] = field(default_factory=list)

    @property
    def residuals(self) -> np.ndarray:
        return np.asarray(self.values) - (self.limit.mean + self.slope / np.asarray(self.T))

    def to_dict(self) -> dict:
        return {"T": list(self.T), "values": list(self.values), "stderrs": list(self.stderrs),
                "limit": self.limit.to_dict(), "slope": self.slope, "slope_stderr": self.slope_stderr,
                "chi2": self.chi2, "dof": len(self.T) - 2}


def _fit_inverse_T(T, y, err, ess: float, n_raw: int) -> tuple[Estimate, float, float, float]:
    T, y, err = (np.asarray(a, dtype=float) for a in (T, y, err))
    X = np.column_stack((np.ones_like(T), 1.0 / T))
    if np.all(err == 0) and np.ptp(y) == 0:
        return Estimate(float(y[0]), 0.0, ess, n_raw), 0.0, 0.0, 0.0
    if np.all(err == 0):
        coef, *_ = np.linalg.lstsq(X, y, rcond=None)
        return Estimate(float(coef[0]), 0.0, ess, n_raw), float(coef[1]), 0.0, 0.0
    if np.any(err <= 0):
        raise ValueError("stderrs must be all zero or all positive")
    wts = 1.0 / err**2
    A = X.T @ (X * wts[:, None])
    cov = np.linalg.inv(A)
    coef = cov @ (X.T @ (wts * y))
    chi2 = float(np.sum(wts * (y - X @ coef) ** 2))
    return (Estimate(float(coef[0]), float(math.sqrt(cov[0, 0])), ess, n_raw), float(coef[1]),
            float(math.sqrt(cov[1, 1])), chi2)


def _ladder(points: Sequence[Estimate], Ts: Sequence[float]) -> LadderFit:
    ess = min(p.ess for p in points)
    n_raw = sum(p.n_raw for p in points)
    if n_raw > 0:
        ess = min(ess, n_raw)
    values = tuple(p.mean for p in points)
    errs = tuple(p.stderr for p in points)
    if len(points) == 1:
        lim = points[0]
        return LadderFit(tuple(Ts), values, errs, lim, 0.0, 0.0, 0.0, list(points))
    lim, slope, slope_err, chi2 = _fit_inverse_T(Ts, values, errs, ess, n_raw)
    return LadderFit(tuple(Ts), values, errs, lim, slope, slope_err, chi2, list(points))


def bloch_extrapolate(samples: Sequence[tuple[float, Estimate]]) -> LadderFit:
    """Ground state energy from (T, ln Z_T) pairs via E_T = -ln Z_T / T - 1 = E + c/T."""
    if len(samples) < 3:
        raise ValueError("need at least 3 T points")
    Ts = [float(T) for T, _ in samples]
    if len(set(Ts)) != len(Ts) or min(Ts) <= 0:
        raise ValueError("T values must be positive and distinct")
    points = [Estimate(-est.mean / T - 1.0, est.stderr / T, est.ess, est.n_raw) for T, est in samples]
    return _ladder(points, Ts)


def susceptibility(rng: np.random.Generator, kernel: ExpSumKernel, params: GibbsParams, budget: int,
                   ladder: Sequence[float] = DEFAULT_LADDER, mode: str = "reweight", burnin: int = 0,
                   thin: int = 1, workers: int = 1) -> LadderFit:
    """-(1/T) <(int_0^T X dt)^2>_{T,lam,0} on a T ladder, extrapolated in 1/T.

    ``params.T`` is ignored in favour of ``ladder``. Only mu = 0 is accepted.
    """
    if params.mu != 0:
        raise ValueError("susceptibility is defined at mu = 0 only")
    if not ladder:
        raise ValueError("empty T ladder")
    points = []
    for child, T in zip(rng.spawn(len(ladder)), ladder):
        mv = moments_of_time_integral(child, kernel, params.with_T(float(T)), 2, budget, mode, burnin, thin, workers)
        sd = math.sqrt(max(mv.cov[1, 1], 0.0))
        points.append(Estimate(-mv.values[1] / T, sd / T, mv.ess, mv.n_raw))
    return _ladder(points, [float(T) for T in ladder])


# --- mass sweep ------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    m: float
    lam: float
    T: float
    value: float
    stderr: float
    ess: float
    l1_norm: float


@dataclass
class MassSweep:
    rows: list[SweepRow]
    threshold: float = 4.0

    def pairwise_sigmas(self) -> np.ndarray:
        v = np.array([r.value for r in self.rows])
        e = np.array([r.stderr for r in self.rows])
        comb = np.hypot(e[:, None], e[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(comb > 0, np.abs(v[:, None] - v[None, :]) / comb,
                           np.where(v[:, None] == v[None, :], 0.0, np.inf))
        return out

    @property
    def monotone_growth(self) -> bool:
        mags = [abs(r.value) for r in self.rows]
        return len(mags) > 1 and all(b > a for a, b in zip(mags, mags[1:]))

    @property
    def growth_sigmas(self) -> float:
        """|value| growth from the heaviest to the lightest mass in combined sigmas."""
        first, last = self.rows[0], self.rows[-1]
        comb = math.hypot(first.stderr, last.stderr)
        diff = abs(last.value) - abs(first.value)
        if comb == 0:
            return 0.0 if diff <= 0 else math.inf
        return diff / comb

    def increments(self) -> tuple[np.ndarray, np.ndarray]:
        """Successive |value| increments along the ladder and their standard errors."""
        mags = np.array([abs(r.value) for r in self.rows])
        errs = np.array([r.stderr for r in self.rows])
        return np.diff(mags), np.hypot(errs[1:], errs[:-1])

    @property
    def deceleration_sigmas(self) -> float:
        """How far the last increment sits below the largest earlier one, in sigmas.

        On a geometric mass ladder a logarithmic or power-law divergence has
        non-shrinking increments; a bounded trend has shrinking ones.
        """
        inc, _ = self.increments()
        if len(inc) < 2:
            return math.inf
        errs = np.array([r.stderr for r in self.rows])
        k = int(np.argmax(inc[:-1]))
        # increments k and last share at most one endpoint; propagate exactly
        coeff = np.zeros(len(self.rows))
        coeff[k + 1] += 1.0
        coeff[k] -= 1.0
        coeff[-1] -= 1.0
        coeff[-2] += 1.0
        err = float(np.sqrt(np.sum((coeff * errs) ** 2)))
        diff = float(inc[k] - inc[-1])
        if err == 0:
            return math.inf if diff > 0 else (0.0 if diff == 0 else -math.inf)
        return diff / err

    @property
    def diverging(self) -> bool:
        """|value| grows monotonically beyond ``threshold`` sigmas without decelerating.

        A ladder with no significant growth is never diverging. With significant
        monotone growth, the last increment must fall ``threshold`` sigmas below
        the largest earlier increment for the trend to count as bounded.
        """
        if not (self.monotone_growth and self.growth_sigmas > self.threshold):
            return False
        return not self.deceleration_sigmas > self.threshold

    @property
    def all_finite(self) -> bool:
        return all(math.isfinite(r.value) and math.isfinite(r.stderr) for r in self.rows)

    @property
    def passed(self) -> bool:
        return self.all_finite and not self.diverging

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["m", "lambda", "T", "value", "stderr", "ess"])
            for r in self.rows:
                writer.writerow([repr(r.m), repr(r.lam), repr(r.T), repr(r.value), repr(r.stderr), repr(r.ess)])

    def to_dict(self) -> dict:
        return {"rows": [{k: float(v) for k, v in r.__dict__.items()} for r in self.rows], "monotone_growth": self.monotone_growth,
                "growth_sigmas": self.growth_sigmas, "deceleration_sigmas": self.deceleration_sigmas,
                "increments": self.increments()[0].tolist(), "diverging": self.diverging,
                "max_pairwise_sigmas": float(self.pairwise_sigmas().max()), "passed": self.passed}

    def write_json(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def lambda_c(model: ContinuousModel, epsilon: float = DEFAULT_EPSILON) -> float:
    """sqrt(epsilon / 2) / ||nu^{-1/2} v||."""
    if not epsilon > 0:
        raise ValueError("epsilon must be > 0")
    return math.sqrt(0.5 * epsilon) / math.sqrt(model.nu_weighted_norm_sq())


def mass_sweep(rng: np.random.Generator, model: ContinuousModel, lam: float, masses: Sequence[float],
               budget: int, ladder: Sequence[float] = (20.0,), n_nodes: int = 24,
               rule: str = "gauss-legendre-stretched", epsilon: float | None = None, mode: str = "reweight",
               burnin: int = 0, thin: int = 1, workers: int = 1) -> MassSweep:
    """Susceptibility of the discretized model for each mass, heaviest first.

    With ``epsilon`` set, lam must satisfy ||lam^2 W_m||_L1 <= epsilon for every m.
    """
    if not masses:
        raise ValueError("empty mass list")
    masses = [float(m) for m in masses]
    if any(b >= a for a, b in zip(masses, masses[1:])):
        raise ValueError("masses must be strictly decreasing")
    rows = []
    for child, m in zip(rng.spawn(len(masses)), masses):
        modes = discretize(model.with_mass(m), n_nodes, rule)
        kernel = ExpSumKernel.from_modes(modes)
        l1 = lam**2 * kernel.l1_norm()
        if epsilon is not None and l1 > epsilon:
            raise ValueError(f"||lam^2 W||_L1 = {l1:.4g} exceeds epsilon = {epsilon} at m = {m}")
        fit = susceptibility(child, kernel, GibbsParams(lam, 0.0, float(ladder[-1])), budget, ladder,
                             mode, burnin, thin, workers)
        rows.append(SweepRow(m, float(lam), float(ladder[-1]) if len(ladder) == 1 else math.inf,
                             fit.limit.mean, fit.limit.stderr, fit.limit.ess, l1))
    return MassSweep(rows)
