"""Truncated Fock-space oracle for H = s_z + dGamma(omega) + s_x (lam phi(v) + mu).

Spin basis order is (up, down) with s_z = diag(1, -1); the boson basis is the
occupation-number basis restricted by per-mode caps and an optional total cap.
Global index = spin * n_boson_states + boson_index, so Omega_down is index
n_boson_states (spin down, vacuum).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .gibbs import GibbsParams, estimate_Z_reweight
from .kernel import ExpSumKernel
from .model import ModeSet

DEFAULT_MAX_DIM = 2_000_000
DENSE_LIMIT = 2000
KRYLOV_MAX = 200


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class TruncationSpec:
    mode_caps: tuple[int, ...]
    total_cap: int | None = None
    max_dim: int = DEFAULT_MAX_DIM

    def __post_init__(self):
        caps = tuple(int(c) for c in np.atleast_1d(self.mode_caps))
        if any(c < 0 for c in caps):
            raise ValueError("mode caps must be >= 0")
        if self.total_cap is not None and self.total_cap < 0:
            raise ValueError("total cap must be >= 0")
        object.__setattr__(self, "mode_caps", caps)

    @classmethod
    def uniform(cls, n_modes: int, cap: int, total_cap: int | None = None) -> "TruncationSpec":
        return cls((cap,) * n_modes, total_cap)

    def expanded(self, by: int = 2) -> "TruncationSpec":
        total = None if self.total_cap is None else self.total_cap + by
        return TruncationSpec(tuple(c + by for c in self.mode_caps), total, self.max_dim)

    def boson_dimension(self) -> int:
        if self.total_cap is None:
            return int(np.prod([c + 1 for c in self.mode_caps]))
        # count occupation vectors with sum <= N by polynomial multiplication
        counts = np.zeros(self.total_cap + 1, dtype=object)
        counts[0] = 1
        for c in self.mode_caps:
            new = np.zeros_like(counts)
            for k in range(min(c, self.total_cap) + 1):
                new[k:] += counts[: self.total_cap + 1 - k]
            counts = new
        return int(sum(counts))

    def dimension(self) -> int:
        return 2 * self.boson_dimension()


def occupation_basis(trunc: TruncationSpec) -> np.ndarray:
    """All occupation vectors, lexicographically ordered, shape (n_states, n_modes)."""
    dim = trunc.boson_dimension()
    if 2 * dim > trunc.max_dim:
        raise MemoryError(f"truncated dimension {2 * dim} exceeds budget {trunc.max_dim}")
    caps = trunc.mode_caps
    if not caps:
        return np.zeros((1, 0), dtype=np.int64)
    grids = np.indices([c + 1 for c in caps]).reshape(len(caps), -1).T
    if trunc.total_cap is not None:
        grids = grids[grids.sum(axis=1) <= trunc.total_cap]
    return np.ascontiguousarray(grids, dtype=np.int64)


class BosonSpace:
    """Occupation basis with O(log n) lookup of neighbouring states."""

    def __init__(self, trunc: TruncationSpec):
        self.trunc = trunc
        self.occ = occupation_basis(trunc)
        caps = np.array(trunc.mode_caps, dtype=np.int64)
        strides = np.ones(len(caps), dtype=np.int64)
        for j in range(len(caps) - 2, -1, -1):
            strides[j] = strides[j + 1] * (caps[j + 1] + 1)
        self.strides = strides
        self.codes = self.occ @ strides if len(caps) else np.zeros(1, dtype=np.int64)

    def __len__(self):
        return len(self.occ)

    def raise_pairs(self, j: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(rows, cols, n_j + 1) for every state whose a_j^dagger image stays inside the basis."""
        occ = self.occ
        ok = occ[:, j] < self.trunc.mode_caps[j]
        if self.trunc.total_cap is not None:
            ok &= occ.sum(axis=1) < self.trunc.total_cap
        src = np.flatnonzero(ok)
        dst = np.searchsorted(self.codes, self.codes[src] + self.strides[j])
        return src, dst, occ[src, j] + 1

    def energy_diagonal(self, omegas: np.ndarray) -> np.ndarray:
        return self.occ @ np.asarray(omegas, dtype=float) if self.occ.shape[1] else np.zeros(len(self))

    def field_operator(self, couplings: np.ndarray) -> sp.csr_matrix:
        """phi(v) = (a(v) + a^dagger(v)) / sqrt 2 in the truncated basis."""
        rows, cols, vals = [], [], []
        for j, g in enumerate(np.asarray(couplings, dtype=float)):
            if g == 0:
                continue
            src, dst, n1 = self.raise_pairs(j)
            amp = g * np.sqrt(n1) / math.sqrt(2.0)
            rows += [dst, src]
            cols += [src, dst]
            vals += [amp, amp]
        n = len(self)
        if not rows:
            return sp.csr_matrix((n, n))
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))


@dataclass
class SparseHamiltonian:
    matrix: sp.csr_matrix
    space: BosonSpace
    lam: float
    mu: float

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @property
    def vacuum_down(self) -> int:
        return len(self.space)

    def basis_state(self, index: int) -> tuple[str, tuple[int, ...]]:
        nb = len(self.space)
        return ("up" if index < nb else "down"), tuple(int(n) for n in self.space.occ[index % nb])

    def write_triplets(self, path: str | Path) -> None:
        """Coordinate text format: header line 'dim nnz', then 'row col value' lines (0-based)."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        with open(path, "w") as fh:
            fh.write(f"{self.dimension} {coo.nnz}\n")
            for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
                fh.write(f"{r} {c} {v!r}\n")


def build_hamiltonian(modes: ModeSet, lam: float, mu: float, trunc: TruncationSpec) -> SparseHamiltonian:
    if len(trunc.mode_caps) != len(modes):
        raise ValueError("truncation needs one cap per mode")
    if trunc.dimension() > trunc.max_dim:
        raise MemoryError(f"truncated dimension {trunc.dimension()} exceeds budget {trunc.max_dim}")
    space = BosonSpace(trunc)
    nb = len(space)
    eye = sp.identity(nb, format="csr")
    sz = sp.csr_matrix(np.diag([1.0, -1.0]))
    sx = sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
    dgamma = sp.diags(space.energy_diagonal(modes.omegas), format="csr")
    coupling = lam * space.field_operator(modes.couplings) + mu * eye
    h = sp.kron(sz, eye) + sp.kron(sp.identity(2), dgamma) + sp.kron(sx, coupling)
    h = sp.csr_matrix(h)
    h.eliminate_zeros()
    h.sort_indices()
    return SparseHamiltonian(h, space, lam, mu)


# --- Lanczos ------------------------------------------------------------------------


def lanczos(matvec, v0: np.ndarray, m: int):
    """m steps of Lanczos with full reorthogonalization.

    Returns (alpha, beta, Q) with Q of shape (dim, k), k <= m; stops early on an
    invariant subspace.
    """
    dim = len(v0)
    m = min(m, dim)
    q = np.zeros((dim, m))
    alpha, beta = np.zeros(m), np.zeros(m)
    q[:, 0] = v0 / np.linalg.norm(v0)
    k = m
    for i in range(m):
        w = matvec(q[:, i])
        alpha[i] = np.dot(q[:, i], w)
        w -= q[:, : i + 1] @ (q[:, : i + 1].T @ w)
        w -= q[:, : i + 1] @ (q[:, : i + 1].T @ w)
        b = np.linalg.norm(w)
        beta[i] = b
        if i + 1 == m:
            break
        if b < 1e-12 * max(1.0, abs(alpha[i])):
            k = i + 1
            break
        q[:, i + 1] = w / b
    return alpha[:k], beta[:k], q[:, :k]


@dataclass(frozen=True)
class LowSpectrum:
    e0: float
    e1: float
    residuals: tuple[float, float]
    dimension: int

    @property
    def gap(self) -> float:
        return max(self.e1 - self.e0, 0.0)

    def to_dict(self) -> dict:
        return {"E0": self.e0, "E1": self.e1, "gap": self.gap, "dimension": self.dimension,
                "residual_norms": list(self.residuals)}


def ground_energy(h: SparseHamiltonian, method: str = "lanczos", tol: float = 1e-11,
                  max_restarts: int = 50, seed: int = 0) -> LowSpectrum:
    """Two lowest eigenvalues; ``gap`` = E1 - E0."""
    a = h.matrix
    dim = a.shape[0]
    if method == "dense" or dim <= 2:
        ev = np.linalg.eigvalsh(a.toarray())
        return LowSpectrum(float(ev[0]), float(ev[1]), (0.0, 0.0), dim)
    if method != "lanczos":
        raise ValueError(f"unknown method {method!r}")
    v = np.random.default_rng(seed).standard_normal(dim)
    scale = max(abs(sp.linalg.norm(a, 1)), 1.0) if dim else 1.0
    for _ in range(max_restarts):
        alpha, beta, q = lanczos(a.dot, v, KRYLOV_MAX)
        k = len(alpha)
        theta, s = scipy.linalg.eigh_tridiagonal(alpha, beta[: k - 1])
        res = np.abs(beta[k - 1] * s[-1, :2]) if k > 1 else np.array([0.0, 0.0])
        if k >= 2 and np.all(res[:2] <= tol * scale):
            return LowSpectrum(float(theta[0]), float(theta[1]), tuple(float(r) for r in res[:2]), dim)
        if k < 2:
            break
        # restart from a blend of the two lowest Ritz vectors
        v = q @ (s[:, 0] + 0.5 * s[:, 1])
    raise ConvergenceError("Lanczos did not converge for the two lowest eigenvalues")


def log_semigroup_vacuum(h: SparseHamiltonian, T: float, tol: float = 1e-13) -> float:
    """ln <Omega_down, exp(-T H) Omega_down>."""
    if T < 0:
        raise ValueError("T must be >= 0")
    if T == 0:
        return 0.0
    dim = h.dimension
    e = np.zeros(dim)
    e[h.vacuum_down] = 1.0
    if dim <= DENSE_LIMIT:
        ev, vecs = np.linalg.eigh(h.matrix.toarray())
        weights = vecs[h.vacuum_down] ** 2
        return float(-T * ev[0] + np.log(np.dot(weights, np.exp(-T * (ev - ev[0])))))
    prev = None
    for m in (20, 40, 80, 120, 160, KRYLOV_MAX):
        alpha, beta, _ = lanczos(h.matrix.dot, e, m)
        k = len(alpha)
        theta, s = scipy.linalg.eigh_tridiagonal(alpha, beta[: k - 1]) if k > 1 else (alpha, np.ones((1, 1)))
        val = float(-T * theta[0] + np.log(np.dot(s[0] ** 2, np.exp(-T * (theta - theta[0])))))
        if k < m or (prev is not None and abs(val - prev) <= tol * max(1.0, abs(val))):
            return val
        prev = val
    raise ConvergenceError("Krylov expansion of exp(-T H) did not reach tolerance")


def semigroup_vacuum(h: SparseHamiltonian, T: float) -> float:
    return math.exp(log_semigroup_vacuum(h, T))


def energy(modes: ModeSet, lam: float, mu: float, trunc: TruncationSpec, **kw) -> float:
    return ground_energy(build_hamiltonian(modes, lam, mu, trunc), **kw).e0


# --- cross-checks -----------------------------------------------------------------------


@dataclass
class FKNReport:
    lhs: float
    lhs_expanded: float
    z_hat: float
    stderr: float
    ess: float
    caps: tuple[tuple[int, ...], tuple[int, ...]]
    threshold: float = 4.0

    @property
    def truncation_delta(self) -> float:
        return abs(self.lhs_expanded - self.lhs)

    @property
    def combined_stderr(self) -> float:
        return math.hypot(self.stderr, self.truncation_delta)

    @property
    def discrepancy(self) -> float:
        return self.z_hat - self.lhs_expanded

    @property
    def sigmas(self) -> float:
        err = self.combined_stderr
        if err == 0:
            return 0.0 if abs(self.discrepancy) <= 1e-12 * max(1.0, abs(self.lhs)) else math.inf
        return abs(self.discrepancy) / err

    @property
    def truncation_converged(self) -> bool:
        return self.stderr == 0 or self.truncation_delta < self.stderr

    @property
    def passed(self) -> bool:
        return self.sigmas <= self.threshold

    def to_dict(self) -> dict:
        return {"lhs": self.lhs, "lhs_expanded": self.lhs_expanded, "z_hat": self.z_hat,
                "stderr": self.stderr, "ess": self.ess, "truncation_delta": self.truncation_delta,
                "combined_stderr": self.combined_stderr, "discrepancy": self.discrepancy,
                "sigmas": self.sigmas, "truncation_converged": self.truncation_converged,
                "caps": [list(c) for c in self.caps], "passed": self.passed}


def fkn_check(modes: ModeSet, params: GibbsParams, trunc: TruncationSpec, mc_budget: int,
              rng: np.random.Generator, threshold: float = 4.0, workers: int = 1) -> FKNReport:
    """e^{-T} <Omega_down, e^{-TH} Omega_down> against the path-integral estimate of Z_T."""
    lhs = [math.exp(-params.T + log_semigroup_vacuum(build_hamiltonian(modes, params.lam, params.mu, tr), params.T))
           for tr in (trunc, trunc.expanded(2))]
    z = estimate_Z_reweight(rng, ExpSumKernel.from_modes(modes), params, mc_budget, workers)
    return FKNReport(lhs[0], lhs[1], z.mean, z.stderr, z.ess,
                     (trunc.mode_caps, trunc.expanded(2).mode_caps), threshold)


def finite_diff_susceptibility(modes: ModeSet, lam: float, trunc: TruncationSpec, h: float = 1e-3,
                               **kw) -> float:
    """d^2 E / d mu^2 at mu = 0: central second difference with one Richardson step."""
    if h <= 0:
        raise ValueError("h must be > 0")
    e0 = energy(modes, lam, 0.0, trunc, **kw)

    def second(step):
        return (energy(modes, lam, step, trunc, **kw) - 2 * e0 + energy(modes, lam, -step, trunc, **kw)) / step**2

    d_h, d_half = second(h), second(h / 2)
    return (4.0 * d_half - d_h) / 3.0


def log_semigroup_mu_derivative2(modes: ModeSet, lam: float, T: float, trunc: TruncationSpec,
                                 h: float = 1e-3) -> float:
    """d^2/d mu^2 of ln <Omega_down, e^{-TH(lam, mu)} Omega_down> at mu = 0 (finite differences)."""
    def f(mu):
        return log_semigroup_vacuum(build_hamiltonian(modes, lam, mu, trunc), T)

    f0 = f(0.0)

    def second(step):
        return (f(step) - 2 * f0 + f(-step)) / step**2

    return (4.0 * second(h / 2) - second(h)) / 3.0


def write_spectrum_json(path: str | Path, spectrum: LowSpectrum, trunc: TruncationSpec) -> None:
    payload = spectrum.to_dict() | {"mode_caps": list(trunc.mode_caps), "total_cap": trunc.total_cap}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)


def field_bound_terms(modes: ModeSet, trunc: TruncationSpec, psi: np.ndarray) -> tuple[float, float]:
    """(||phi(v) psi||, sqrt2 ||omega^-1/2 v|| ||dGamma^1/2 psi|| + ||v|| ||psi|| / sqrt2) on boson space."""
    space = BosonSpace(trunc)
    phi = space.field_operator(modes.couplings)
    diag = space.energy_diagonal(modes.omegas)
    lhs = float(np.linalg.norm(phi @ psi))
    rhs = (math.sqrt(2.0 * modes.omega_weighted_norm_sq()) * float(np.sqrt(np.dot(diag, psi**2)))
           + math.sqrt(modes.norm_sq() / 2.0) * float(np.linalg.norm(psi)))
    return lhs, rhs

