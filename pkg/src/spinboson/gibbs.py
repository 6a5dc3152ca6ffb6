"""Continuous long-range Ising Gibbs measure on [0, T].

The weight of a path x is exp(A[x]) with
A[x] = lam^2 int int W(t-s) x_t x_s ds dt - mu int x_t dt
relative to the law of the jump process; Z_T is its mean.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._fast import flip_delta_fast, quadratic_form_fast
from .kernel import ExpSumKernel, one_minus_exp, phi2
from .paths import PathBatch, SpinPath, sample_path, sample_paths
from .stats import (Estimate, MomentVector, batch_covariance, chain_estimate, integrated_autocorr_time,
                    kish_ess, weighted_estimate)

MOVES = ("birth", "death", "shift", "flip")
MOVE_PROBS = (0.35, 0.35, 0.2, 0.1)
_CUM_PROBS = tuple(np.cumsum(MOVE_PROBS))
REVALIDATE_EVERY = 10_000
DEFAULT_CHUNK = 50_000


@dataclass(frozen=True)
class GibbsParams:
    lam: float
    mu: float
    T: float

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be > 0")

    def with_T(self, T: float) -> "GibbsParams":
        return GibbsParams(self.lam, self.mu, T)

    def scaled(self, s: float) -> "GibbsParams":
        """Parameters of the measure with weight exp(s A)."""
        return GibbsParams(math.sqrt(s) * abs(self.lam), s * self.mu, self.T)


# --- action ---------------------------------------------------------------------


def action(path: SpinPath, kernel: ExpSumKernel, params: GibbsParams) -> float:
    """Exact action from pairwise rectangle integrals over constant-spin intervals."""
    if path.horizon != params.T:
        raise ValueError(f"path horizon {path.horizon} != T = {params.T}")
    starts, ends, signs = path.intervals()
    quad = 0.0
    if params.lam != 0 and not kernel.is_zero:
        n = len(starts)
        for i in range(n):
            quad += kernel.rect_integral((starts[i], ends[i]), (starts[i], ends[i]))
            for j in range(i + 1, n):
                quad += 2.0 * signs[i] * signs[j] * kernel.rect_integral((starts[i], ends[i]), (starts[j], ends[j]))
    return params.lam**2 * quad - params.mu * path.time_integral()


def quadratic_form(breakpoints: np.ndarray, signs: np.ndarray, kernel: ExpSumKernel) -> np.ndarray:
    """int int W(t-s) x_t x_s over [0,T]^2 for many paths at once.

    Uses the exponential-kernel recursion u(t) = int_0^t e^{-omega (t-s)} x_s ds,
    carried interval by interval; zero-length padding intervals contribute nothing.
    ``breakpoints`` has shape (n, k+1), ``signs`` shape (n, k).
    """
    bp = np.atleast_2d(breakpoints)
    sg = np.atleast_2d(signs).astype(float)
    om, w = kernel.rates[None, :], kernel.weights[None, :]
    u = np.zeros((bp.shape[0], len(kernel.rates)))
    total = np.zeros_like(u)
    lengths = np.diff(bp, axis=1)
    for i in range(lengths.shape[1]):
        x = om * lengths[:, i: i + 1]
        decay = one_minus_exp(x) / om
        s = sg[:, i: i + 1]
        total += s * u * decay + phi2(x) / om**2
        u = u * np.exp(-x) + s * decay
    return 2.0 * (total @ w.ravel())


def path_action(path: SpinPath, kernel: ExpSumKernel, params: GibbsParams) -> float:
    """Same value as :func:`action`, linear in the number of jumps."""
    _, _, signs = path.intervals()
    quad = quadratic_form(path.breakpoints()[None, :], signs[None, :], kernel)[0]
    return params.lam**2 * quad - params.mu * path.time_integral()


def batch_action(batch: PathBatch, kernel: ExpSumKernel, params: GibbsParams) -> np.ndarray:
    out = -params.mu * batch.time_integrals()
    if params.lam != 0 and not kernel.is_zero:
        quad = quadratic_form_fast(batch.signs.astype(float), batch.jumps, batch.counts.astype(np.int64),
                                   float(batch.horizon), kernel.weights, kernel.rates)
        out = out + params.lam**2 * quad
    return out


# --- iid reweighting ------------------------------------------------------------


def _draw_chunk(rng, kernel, params, n):
    batch = sample_paths(rng, params.T, n)
    return batch_action(batch, kernel, params), batch.time_integrals()


def _run_chunk(args):
    return _draw_chunk(*args)


def draw_weighted(rng: np.random.Generator, kernel: ExpSumKernel, params: GibbsParams, n_samples: int,
                  workers: int = 1, chunk: int = DEFAULT_CHUNK) -> tuple[np.ndarray, np.ndarray]:
    """iid paths from the reference law: (actions, time integrals).

    Each chunk gets its own child stream spawned from ``rng``, so the output does
    not depend on ``workers``.
    """
    sizes = [chunk] * (n_samples // chunk)
    if n_samples % chunk:
        sizes.append(n_samples % chunk)
    jobs = [(child, kernel, params, n) for child, n in zip(rng.spawn(len(sizes)), sizes)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, jobs))
    else:
        parts = [_run_chunk(j) for j in jobs]
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def _z_from_actions(a: np.ndarray) -> Estimate:
    n = len(a)
    shift = a.max()
    w = np.exp(a - shift)
    scale = math.exp(shift)
    mean = float(w.mean()) * scale
    stderr = float(w.std(ddof=1) / math.sqrt(n)) * scale
    return Estimate(mean, stderr, kish_ess(a), n)


def estimate_Z_reweight(rng: np.random.Generator, kernel: ExpSumKernel, params: GibbsParams,
                        n_samples: int, workers: int = 1) -> Estimate:
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    a, _ = draw_weighted(rng, kernel, params, n_samples, workers)
    return _z_from_actions(a)


def log_z_from_actions(a: np.ndarray) -> Estimate:
    """ln of the mean of exp(a) via shifted log-mean-exp, delta-method error."""
    n = len(a)
    shift = a.max()
    w = np.exp(a - shift)
    mw = w.mean()
    return Estimate(float(shift + math.log(mw)), float(w.std(ddof=1) / (math.sqrt(n) * mw)), kish_ess(a), n)


def estimate_logZ_reweight(rng: np.random.Generator, kernel: ExpSumKernel, params: GibbsParams,
                           n_samples: int, workers: int = 1) -> Estimate:
    a, _ = draw_weighted(rng, kernel, params, n_samples, workers)
    return log_z_from_actions(a)


# --- MCMC -------------------------------------------------------------------------


@dataclass
class ChainState:
    sign: int
    jumps: np.ndarray
    T: float
    cached_action: float
    move_stats: dict = field(default_factory=lambda: {m: [0, 0] for m in MOVES})
    steps: int = 0
    max_drift: float = 0.0

    @property
    def path(self) -> SpinPath:
        return SpinPath(self.sign, self.jumps, self.T)

    @property
    def n_jumps(self) -> int:
        return len(self.jumps)

    def time_integral(self) -> float:
        bp = np.concatenate(([0.0], self.jumps, [self.T]))
        signs = self.sign * (1 - 2 * (np.arange(len(bp) - 1) % 2))
        return float(np.dot(signs, np.diff(bp)))

    def acceptance_rates(self) -> dict:
        return {m: (acc / prop if prop else math.nan) for m, (prop, acc) in self.move_stats.items()}


def new_chain(rng: np.random.Generator, kernel: ExpSumKernel, params: GibbsParams,
              path: SpinPath | None = None) -> ChainState:
    path = path if path is not None else sample_path(rng, params.T)
    return ChainState(path.initial_sign, np.array(path.jumps), params.T, path_action(path, kernel, params))


def flip_delta(sign: int, jumps: np.ndarray, T: float, lo: float, hi: float,
               kernel: ExpSumKernel, params: GibbsParams) -> float:
    """Change of the action when the path is negated on [lo, hi].

    With R = [lo, hi] and R^c its complement the quadratic term changes by
    -4 int_R int_{R^c} W x x, which factorizes for exponential kernels because
    R^c splits into a part left of lo and a part right of hi.
    """
    bp = np.concatenate(([0.0], jumps, [T]))
    signs = sign * (1.0 - 2.0 * (np.arange(len(bp) - 1) % 2))
    a_r, b_r = np.clip(bp[:-1], lo, hi), np.clip(bp[1:], lo, hi)
    delta = 2.0 * params.mu * float(np.dot(signs, b_r - a_r))
    if params.lam == 0 or kernel.is_zero or (lo <= 0 and hi >= T):
        return delta
    om = kernel.rates[None, :]
    s = signs[:, None]
    len_r = (b_r - a_r)[:, None]
    cross = np.zeros(om.shape[1])
    if lo > 0:
        a_l, b_l = np.clip(bp[:-1], 0.0, lo)[:, None], np.clip(bp[1:], 0.0, lo)[:, None]
        g_left = np.sum(s * np.exp(-om * (lo - b_l)) * one_minus_exp(om * (b_l - a_l)), axis=0)
        g_r = np.sum(s * np.exp(-om * (a_r[:, None] - lo)) * one_minus_exp(om * len_r), axis=0)
        cross += g_left * g_r
    if hi < T:
        a_h, b_h = np.clip(bp[:-1], hi, T)[:, None], np.clip(bp[1:], hi, T)[:, None]
        g_right = np.sum(s * np.exp(-om * (a_h - hi)) * one_minus_exp(om * (b_h - a_h)), axis=0)
        g_r = np.sum(s * np.exp(-om * (hi - b_r[:, None])) * one_minus_exp(om * len_r), axis=0)
        cross += g_right * g_r
    quad = float(np.dot(kernel.weights / kernel.rates**2, cross))
    return delta - 4.0 * params.lam**2 * quad


def _flip_delta(state, lo, hi, kernel, params) -> float:
    return flip_delta_fast(state.sign, state.jumps, state.T, lo, hi, kernel.weights, kernel.rates,
                           float(params.lam), float(params.mu))


def log_acceptance_ratio(move: str, n_before: int, d_action: float, T: float) -> float:
    """Metropolis-Hastings log ratio for the move menu (equal birth/death probabilities)."""
    if move == "birth":
        return d_action + math.log(T / (n_before + 1))
    if move == "death":
        return d_action + math.log(n_before / T)
    return d_action


@dataclass(frozen=True)
class Proposal:
    move: str
    region: tuple[float, float]
    new_sign: int
    new_jumps: np.ndarray


def propose(state: ChainState, rng: np.random.Generator) -> Proposal | None:
    """Draw a move; None marks a move that is impossible from this state (rejected)."""
    r = rng.random()
    move = next((m for m, c in zip(MOVES, _CUM_PROBS) if r < c), MOVES[-1])
    T, jumps, n = state.T, state.jumps, state.n_jumps
    if move == "birth":
        u = rng.uniform(0.0, T)
        k = int(jumps.searchsorted(u))
        if u <= 0 or (k < n and jumps[k] == u):
            return Proposal(move, (0.0, 0.0), state.sign, jumps)  # measure-zero collision
        return Proposal(move, (u, T), state.sign, np.concatenate((jumps[:k], [u], jumps[k:])))
    if move == "death":
        if n == 0:
            return None
        k = int(rng.integers(n))
        return Proposal(move, (jumps[k], T), state.sign, np.concatenate((jumps[:k], jumps[k + 1:])))
    if move == "shift":
        if n == 0:
            return None
        k = int(rng.integers(n))
        u = rng.uniform(0.0, T)
        rest = np.concatenate((jumps[:k], jumps[k + 1:]))
        j = int(rest.searchsorted(u))
        if u <= 0 or (j < len(rest) and rest[j] == u):
            return None
        old = jumps[k]
        return Proposal(move, (min(old, u), max(old, u)), state.sign, np.concatenate((rest[:j], [u], rest[j:])))
    return Proposal(move, (0.0, T), -state.sign, jumps)


def mcmc_step(state: ChainState, rng: np.random.Generator, kernel: ExpSumKernel,
              params: GibbsParams) -> ChainState:
    """One Metropolis-Hastings update in place; returns the same state object."""
    prop = propose(state, rng)
    state.steps += 1
    if prop is not None:
        stats = state.move_stats[prop.move]
        stats[0] += 1
        lo, hi = prop.region
        if hi > lo or prop.move == "flip":
            d_a = _flip_delta(state, lo, hi, kernel, params)
            log_r = log_acceptance_ratio(prop.move, state.n_jumps, d_a, state.T)
            if log_r >= 0 or rng.random() < math.exp(log_r):
                state.sign, state.jumps = prop.new_sign, prop.new_jumps
                state.cached_action += d_a
                stats[1] += 1
    if state.steps % REVALIDATE_EVERY == 0:
        full = path_action(state.path, kernel, params)
        drift = abs(full - state.cached_action)
        state.max_drift = max(state.max_drift, drift)
        if drift > 1e-9 * max(1.0, abs(full)):
            raise RuntimeError(f"cached action drifted by {drift:.3e}")
        state.cached_action = full
    return state


def run_chain(rng: np.random.Generator, kernel: ExpSumKernel, params: GibbsParams, n_steps: int,
              burnin: int, record: Callable[[ChainState], object], thin: int = 1,
              state: ChainState | None = None) -> tuple[np.ndarray, ChainState]:
    """Run burnin + n_steps updates, recording ``record(state)`` every ``thin`` steps."""
    state = state if state is not None else new_chain(rng, kernel, params)
    for _ in range(burnin):
        mcmc_step(state, rng, kernel, params)
    out = []
    for i in range(n_steps):
        mcmc_step(state, rng, kernel, params)
        if (i + 1) % thin == 0:
            out.append(record(state))
    return np.asarray(out, dtype=float), state


# --- observables and expectations -------------------------------------------------


class TimeIntegralPower:
    """Observable (int_0^T x_t dt)^k, with a vectorized batch form."""

    def __init__(self, k: int = 1, scale: float = 1.0):
        self.k, self.scale = k, scale

    def __call__(self, path: SpinPath) -> float:
        return self.scale * path.time_integral() ** self.k

    def batch(self, batch: PathBatch) -> np.ndarray:
        return self.scale * batch.time_integrals() ** self.k

    def from_state(self, state: ChainState) -> float:
        return self.scale * state.time_integral() ** self.k


class SpinProduct:
    """Observable x_{t_1} ... x_{t_n}."""

    def __init__(self, times):
        self.times = tuple(float(t) for t in times)

    def __call__(self, path: SpinPath) -> float:
        return float(np.prod([path.eval(t) for t in self.times]))

    def batch(self, batch: PathBatch) -> np.ndarray:
        return np.prod([batch.eval(t) for t in self.times], axis=0).astype(float)

    def from_state(self, state: ChainState) -> float:
        counts = np.searchsorted(state.jumps, self.times, side="right")
        return float(np.prod(state.sign * (1 - 2 * (counts % 2))))


def _checked(values: np.ndarray, what: str) -> np.ndarray:
    bad = ~np.isfinite(values)
    if bad.any():
        raise FloatingPointError(f"observable {what} returned {int(bad.sum())} non-finite values "
                                 f"(first at sample {int(np.argmax(bad))})")
    return values


def gibbs_expect(rng: np.random.Generator, kernel: ExpSumKernel, params: GibbsParams, observable,
                 budget: int, burnin: int = 0, mode: str = "mcmc", thin: int = 1,
                 workers: int = 1) -> Estimate:
    """<observable>_{T,lam,mu}: MCMC time average or self-normalized reweighting."""
    if mode == "reweight":
        batch_fn = getattr(observable, "batch", None)
        a_parts, y_parts = [], []
        sizes = [DEFAULT_CHUNK] * (budget // DEFAULT_CHUNK) + ([budget % DEFAULT_CHUNK] if budget % DEFAULT_CHUNK else [])
        for child, n in zip(rng.spawn(len(sizes)), sizes):
            batch = sample_paths(child, params.T, n)
            a_parts.append(batch_action(batch, kernel, params))
            if batch_fn is not None:
                y_parts.append(np.asarray(batch_fn(batch), dtype=float))
            else:
                y_parts.append(np.array([observable(batch.path(i)) for i in range(n)], dtype=float))
        y = _checked(np.concatenate(y_parts), repr(observable))
        return weighted_estimate(np.concatenate(a_parts), y)
    if mode != "mcmc":
        raise ValueError(f"unknown mode {mode!r}")
    if budget <= burnin:
        raise ValueError("budget must exceed burnin")
    record = getattr(observable, "from_state", None) or (lambda st: observable(st.path))
    series, _ = run_chain(rng, kernel, params, budget - burnin, burnin, record, thin)
    return chain_estimate(_checked(series, repr(observable)))


def moments_from_weights(log_w: np.ndarray, y: np.ndarray, n_max: int) -> MomentVector:
    """Self-normalized moments <y^k>, k = 1..n_max, with delta-method covariance."""
    w = np.exp(log_w - log_w.max())
    s = w.sum()
    powers = y[:, None] ** np.arange(1, n_max + 1)[None, :]
    m = (w @ powers) / s
    dev = (powers - m[None, :]) * (w / s)[:, None]
    cov = dev.T @ dev
    return MomentVector(m, cov, len(y), kish_ess(log_w))


def moments_of_time_integral(rng: np.random.Generator, kernel: ExpSumKernel, params: GibbsParams,
                             n_max: int, budget: int, mode: str = "reweight", burnin: int = 0,
                             thin: int = 1, workers: int = 1) -> MomentVector:
    """Estimates of <(int_0^T X_t dt)^k>_{T,lam,mu} for k = 1..n_max with covariance."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    if mode == "reweight":
        a, y = draw_weighted(rng, kernel, params, budget, workers)
        return moments_from_weights(a, y, n_max)
    if mode != "mcmc":
        raise ValueError(f"unknown mode {mode!r}")
    series, _ = run_chain(rng, kernel, params, budget - burnin, burnin, lambda st: st.time_integral(), thin)
    powers = series[:, None] ** np.arange(1, n_max + 1)[None, :]
    tau = max(integrated_autocorr_time(p) for p in powers.T)
    return MomentVector(powers.mean(axis=0), batch_covariance(powers), len(series), len(series) / tau)


def estimate_logZ_bridge(rng: np.random.Generator, kernel: ExpSumKernel, params: GibbsParams,
                         budget: int, burnin: int = 1000, n_nodes: int = 8, thin: int = 1) -> Estimate:
    """ln Z_T by thermodynamic integration: ln Z = int_0^1 <A>_s ds under weight exp(s A).

    Each Gauss-Legendre node runs its own chain; the error combines the node
    errors and ignores the (smooth-integrand) quadrature error.
    """
    x, q = np.polynomial.legendre.leggauss(n_nodes)
    s_nodes, q = 0.5 * (x + 1.0), 0.5 * q
    total, var, ess = 0.0, 0.0, 0.0
    for child, s, qs in zip(rng.spawn(n_nodes), s_nodes, q):
        p_s = params.scaled(float(s))
        series, _ = run_chain(child, kernel, p_s, budget, burnin, lambda st, s=s: st.cached_action / s, thin)
        est = chain_estimate(series)
        total += qs * est.mean
        var += (qs * est.stderr) ** 2
        ess += est.ess
    return Estimate(float(total), float(math.sqrt(var)), ess / n_nodes, budget * n_nodes)
