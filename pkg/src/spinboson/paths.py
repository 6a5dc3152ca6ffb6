"""The +-1 jump process driven by a unit-rate Poisson process."""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .stats import iid_estimate


@dataclass(frozen=True, eq=False)
class SpinPath:
    """One realization x_t = initial_sign * (-1)^{#jumps <= t} on [0, horizon]."""

    initial_sign: int
    jumps: np.ndarray
    horizon: float

    def __post_init__(self):
        if self.initial_sign not in (1, -1):
            raise ValueError("initial_sign must be +1 or -1")
        if not self.horizon > 0:
            raise ValueError("horizon must be > 0")
        j = np.asarray(self.jumps, dtype=float).ravel()
        if len(j) and (j[0] <= 0 or j[-1] >= self.horizon or np.any(np.diff(j) <= 0)):
            raise ValueError("jumps must be strictly increasing inside (0, horizon)")
        j.setflags(write=False)
        object.__setattr__(self, "jumps", j)

    @property
    def n_jumps(self) -> int:
        return len(self.jumps)

    def __eq__(self, other):
        return (isinstance(other, SpinPath) and self.initial_sign == other.initial_sign
                and self.horizon == other.horizon and np.array_equal(self.jumps, other.jumps))

    def eval(self, t):
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < 0) or np.any(t_arr > self.horizon):
            raise ValueError(f"t outside [0, {self.horizon}]")
        count = np.searchsorted(self.jumps, t_arr, side="right")
        out = self.initial_sign * (1 - 2 * (count % 2))
        return int(out) if out.ndim == 0 else out

    def breakpoints(self) -> np.ndarray:
        return np.concatenate(([0.0], self.jumps, [self.horizon]))

    def intervals(self):
        """(starts, ends, signs) of the constant-spin intervals."""
        bp = self.breakpoints()
        signs = self.initial_sign * (1 - 2 * (np.arange(len(bp) - 1) % 2))
        return bp[:-1], bp[1:], signs

    def time_integral(self) -> float:
        starts, ends, signs = self.intervals()
        return float(np.dot(signs, ends - starts))

    def flipped(self) -> "SpinPath":
        return SpinPath(-self.initial_sign, self.jumps, self.horizon)


def _strict_jumps(rng: np.random.Generator, T: float, count: int) -> np.ndarray:
    jumps = np.sort(rng.uniform(0.0, T, size=count))
    while True:
        keep = jumps > 0
        if len(jumps) > 1:
            keep[1:] &= np.diff(jumps) > 0
        if keep.all():
            return jumps
        # ties and zeros: drop and resample the excess
        jumps = np.sort(np.concatenate((jumps[keep], rng.uniform(0.0, T, size=int((~keep).sum())))))


def sample_path(rng: np.random.Generator, T: float) -> SpinPath:
    if not T > 0:
        raise ValueError("horizon must be > 0")
    count = int(rng.poisson(T))
    sign = 1 if rng.random() < 0.5 else -1
    return SpinPath(sign, _strict_jumps(rng, T, count), T)


@dataclass(frozen=True)
class PathBatch:
    """Many paths in padded form: jump slots beyond ``counts`` hold the horizon."""

    signs: np.ndarray
    jumps: np.ndarray
    counts: np.ndarray
    horizon: float

    def __len__(self):
        return len(self.signs)

    def path(self, i: int) -> SpinPath:
        return SpinPath(int(self.signs[i]), self.jumps[i, : self.counts[i]], self.horizon)

    def breakpoints(self) -> np.ndarray:
        n = len(self)
        return np.hstack((np.zeros((n, 1)), self.jumps, np.full((n, 1), self.horizon)))

    def interval_signs(self) -> np.ndarray:
        k = self.jumps.shape[1] + 1
        return self.signs[:, None] * (1 - 2 * (np.arange(k) % 2))[None, :]

    def time_integrals(self) -> np.ndarray:
        bp = self.breakpoints()
        return np.sum(self.interval_signs() * np.diff(bp, axis=1), axis=1)

    def eval(self, t: float) -> np.ndarray:
        real = np.arange(self.jumps.shape[1])[None, :] < self.counts[:, None]
        count = np.sum((self.jumps <= t) & real, axis=1)
        return self.signs * (1 - 2 * (count % 2))


def sample_paths(rng: np.random.Generator, T: float, n: int) -> PathBatch:
    """Vectorized iid sampling with the same law as :func:`sample_path`."""
    if not T > 0:
        raise ValueError("horizon must be > 0")
    counts = rng.poisson(T, size=n)
    signs = np.where(rng.random(n) < 0.5, 1, -1)
    width = max(int(counts.max(initial=0)), 1)
    u = rng.uniform(0.0, T, size=(n, width))
    slot = np.arange(width)[None, :]
    u = np.where(slot < counts[:, None], u, T)
    u.sort(axis=1)
    # zero-probability ties or exact zeros among real jumps: redraw those rows
    real = slot < counts[:, None]
    bad = np.any(real & (u <= 0), axis=1)
    if width > 1:
        bad |= np.any(real[:, 1:] & (np.diff(u, axis=1) <= 0), axis=1)
    for i in np.flatnonzero(bad):
        row = np.full(width, T)
        row[: counts[i]] = _strict_jumps(rng, T, int(counts[i]))
        u[i] = row
    return PathBatch(signs, u, counts, T)


# --- exact identities ---------------------------------------------------------


def exact_moment(times: Sequence[float]) -> float:
    """E[X_{s_1} ... X_{s_n}] for sorted times: zero for odd n, else product of
    exp(-2 (s_{2i} - s_{2i-1}))."""
    s = np.asarray(times, dtype=float)
    if np.any(np.diff(s) < 0):
        raise ValueError("times must be sorted")
    if np.any(s < 0):
        raise ValueError("times must be non-negative")
    if len(s) % 2:
        return 0.0
    return float(np.exp(-2.0 * np.sum(s[1::2] - s[0::2])))


SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]])
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]])
E1 = np.array([1.0, 1.0]) / np.sqrt(2.0)
E2 = np.array([1.0, -1.0]) / np.sqrt(2.0)


def spin_semigroup_element(alpha, beta, durations: Sequence[float]) -> complex | float:
    """exp(-sum t) <alpha, s_z e^{t_1 s_x} s_z ... e^{t_n s_x} s_z beta>."""
    t = np.asarray(durations, dtype=float)
    if len(t) < 1:
        raise ValueError("need at least one duration")
    if np.any(t <= 0):
        raise ValueError("durations must be positive")
    vec = SIGMA_Z @ np.asarray(beta)
    for tk in t[::-1]:
        # e^{t s_x} = cosh t I + sinh t s_x, with the e^{-t} prefactor folded in
        c, s = 0.5 * (1 + np.exp(-2 * tk)), 0.5 * (1 - np.exp(-2 * tk))
        vec = SIGMA_Z @ (c * vec + s * (SIGMA_X @ vec))
    out = np.vdot(np.asarray(alpha), vec)
    return float(out.real) if np.isrealobj(alpha) and np.isrealobj(beta) else complex(out)


def _iota_coeffs(vec) -> tuple[complex, complex]:
    """(p, q) with (iota vec)(x) = p + q x."""
    a1, a2 = np.asarray(vec, dtype=complex)
    return (a1 + a2) / np.sqrt(2.0), (a1 - a2) / np.sqrt(2.0)


def spin_path_expectation(alpha, beta, durations: Sequence[float]) -> complex:
    """E[conj(iota alpha(X_0)) X_0 X_{s_1} ... X_{s_n} iota beta(X_{s_n})] in closed form."""
    s = np.concatenate(([0.0], np.cumsum(durations)))
    pa, qa = _iota_coeffs(alpha)
    pb, qb = _iota_coeffs(beta)
    total = 0.0 + 0.0j
    for ca, extra0 in ((np.conj(pa), []), (np.conj(qa), [0.0])):
        for cb, extra_end in ((pb, []), (qb, [s[-1]])):
            if ca == 0 or cb == 0:
                continue
            total += ca * cb * exact_moment(sorted(extra0 + list(s) + extra_end))
    return total


@dataclass
class SpinFKNReport:
    matrix_element: float
    exact_moment: float
    mc_mean: float
    mc_stderr: float

    @property
    def exact_deviation(self) -> float:
        return abs(self.matrix_element - self.exact_moment)

    @property
    def mc_sigmas(self) -> float:
        if self.mc_stderr == 0:
            return 0.0 if self.mc_mean == self.matrix_element else np.inf
        return abs(self.mc_mean - self.matrix_element) / self.mc_stderr


def verify_spin_fkn(n: int, times: Sequence[float], sample_budget: int,
                    rng: np.random.Generator, alpha=E1, beta=E1) -> SpinFKNReport:
    """Compare the 2x2 matrix element with the exact moment and a jump-process average."""
    t = np.asarray(times, dtype=float)
    if len(t) != n:
        raise ValueError("len(times) must equal n")
    lhs = spin_semigroup_element(alpha, beta, t)
    exact = spin_path_expectation(alpha, beta, t)
    s = np.concatenate(([0.0], np.cumsum(t)))
    batch = sample_paths(rng, float(s[-1]) if s[-1] > 0 else 1.0, sample_budget)
    pa, qa = _iota_coeffs(alpha)
    pb, qb = _iota_coeffs(beta)
    vals = np.stack([batch.eval(tk) for tk in s])
    x0, xn = vals[0], vals[-1]
    y = np.conj(pa + qa * x0) * np.prod(vals, axis=0) * (pb + qb * xn)
    est = iid_estimate(np.real(y))
    return SpinFKNReport(float(np.real(lhs)), float(np.real(exact)), est.mean, est.stderr)


# --- serialization --------------------------------------------------------------

MAGIC = b"SBPATH01"
# header: magic (8 bytes), horizon (float64), path count (uint64); then per path
# float64 initial sign, float64 jump count, jump count * float64 jump times; little endian
_HEADER = struct.Struct("<8sdQ")


def write_paths_csv(path: str | Path, paths: Sequence[SpinPath]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["initial_sign", "n_jumps", "horizon", "jumps"])
        for p in paths:
            writer.writerow([p.initial_sign, p.n_jumps, repr(p.horizon), " ".join(repr(float(t)) for t in p.jumps)])


def read_paths_csv(path: str | Path) -> list[SpinPath]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            jumps = [float(t) for t in row["jumps"].split()] if row["jumps"] else []
            if len(jumps) != int(row["n_jumps"]):
                raise ValueError("jump count does not match the listed times")
            out.append(SpinPath(int(row["initial_sign"]), np.array(jumps), float(row["horizon"])))
    return out


def write_paths_binary(path: str | Path, paths: Sequence[SpinPath]) -> None:
    horizons = {p.horizon for p in paths}
    if len(horizons) > 1:
        raise ValueError("binary layout stores one horizon per file")
    T = horizons.pop() if horizons else 0.0
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, T, len(paths)))
        for p in paths:
            fh.write(np.array([p.initial_sign, p.n_jumps], dtype="<f8").tobytes())
            fh.write(np.asarray(p.jumps, dtype="<f8").tobytes())


def read_paths_binary(path: str | Path) -> list[SpinPath]:
    with open(path, "rb") as fh:
        data = fh.read()
    magic, T, count = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValueError("not a spin path file")
    pos, out = _HEADER.size, []
    for _ in range(count):
        sign, n = np.frombuffer(data, dtype="<f8", count=2, offset=pos)
        pos += 16
        jumps = np.frombuffer(data, dtype="<f8", count=int(n), offset=pos).copy()
        pos += 8 * int(n)
        out.append(SpinPath(int(sign), jumps, T))
    return out
