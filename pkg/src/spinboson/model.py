"""Model definitions and their reduction to finite mode sets.

Continuous models are radial: the dispersion base is a power law
``nu(r) = scale * r**exponent``, the boson energy is ``omega = sqrt(nu**2 + m**2)``
and the coupling is ``v(r) = amplitude * r**delta`` for ``r <= cutoff``.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.special import gamma

RULES = ("gauss-legendre", "gauss-legendre-stretched")
PROBE_RADII = (0.0, 0.25, 0.5, 0.75, 1.0)


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere in R^d (S_{d-1}); equals 2 for d=1."""
    return 2.0 * math.pi ** (d / 2) / gamma(d / 2)


@dataclass(frozen=True)
class NuProfile:
    """Radial dispersion base nu(r) = scale * r**exponent."""

    exponent: float = 1.0
    scale: float = 1.0

    def __post_init__(self):
        if self.exponent <= 0 or self.scale <= 0:
            raise ValueError("nu profile needs exponent > 0 and scale > 0")

    def __call__(self, r):
        return self.scale * np.power(r, self.exponent)

    @classmethod
    def from_config(cls, spec) -> "NuProfile":
        if spec in (None, "linear"):
            return cls()
        if isinstance(spec, dict):
            profile = spec.get("profile", "power")
            if profile == "linear":
                return cls(scale=float(spec.get("scale", 1.0)))
            if profile == "power":
                return cls(float(spec.get("exponent", 1.0)), float(spec.get("scale", 1.0)))
        raise ValueError(f"unknown nu profile {spec!r}")

    def to_config(self):
        if self.exponent == 1.0 and self.scale == 1.0:
            return "linear"
        return {"profile": "power", "exponent": self.exponent, "scale": self.scale}


@dataclass(frozen=True)
class ContinuousModel:
    dimension: int = 3
    nu: NuProfile = field(default_factory=NuProfile)
    mass: float = 0.0
    amplitude: float = 1.0
    delta: float = -0.5
    cutoff: float = 1.0

    def __post_init__(self):
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise ValueError("dimension must be a positive integer")
        if self.mass < 0:
            raise ValueError("mass must be >= 0")
        if self.cutoff <= 0:
            raise ValueError("cutoff must be > 0")

    def omega(self, r):
        return np.sqrt(self.nu(r) ** 2 + self.mass**2)

    def v(self, r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            out = self.amplitude * np.power(r, self.delta)
        return np.where(r <= self.cutoff, out, 0.0)

    def with_mass(self, mass: float) -> "ContinuousModel":
        return ContinuousModel(self.dimension, self.nu, mass, self.amplitude, self.delta, self.cutoff)

    def radial_norm_sq(self, weight: Callable[[np.ndarray], np.ndarray] | None = None) -> float:
        """Integral of |v(k)|^2 * weight(|k|) over R^d by adaptive quadrature."""
        s = sphere_area(self.dimension)

        def integrand(r):
            val = self.amplitude**2 * r ** (2 * self.delta + self.dimension - 1)
            return val * (weight(r) if weight is not None else 1.0)

        val, _ = integrate.quad(integrand, 0.0, self.cutoff, limit=400, epsabs=0, epsrel=1e-13)
        return s * val

    def norm_sq(self) -> float:
        """||v||_2^2."""
        return self.radial_norm_sq()

    def omega_weighted_norm_sq(self) -> float:
        """||omega^{-1/2} v||_2^2."""
        return self.radial_norm_sq(lambda r: 1.0 / self.omega(r))

    def nu_weighted_norm_sq(self) -> float:
        """||nu^{-1/2} v||_2^2 (the massless bound behind every mass)."""
        return self.radial_norm_sq(lambda r: 1.0 / self.nu(r))

    def to_config(self) -> dict:
        return {
            "dimension": self.dimension,
            "nu": self.nu.to_config(),
            "mass": self.mass,
            "amplitude": self.amplitude,
            "delta": self.delta,
            "cutoff": self.cutoff,
        }

    @classmethod
    def from_config(cls, cfg: dict) -> "ContinuousModel":
        known = {"dimension", "nu", "mass", "amplitude", "delta", "cutoff"}
        extra = set(cfg) - known
        if extra:
            raise ValueError(f"unknown model field(s): {sorted(extra)}")
        return cls(
            dimension=int(cfg.get("dimension", 3)),
            nu=NuProfile.from_config(cfg.get("nu")),
            mass=float(cfg.get("mass", 0.0)),
            amplitude=float(cfg.get("amplitude", 1.0)),
            delta=float(cfg.get("delta", -0.5)),
            cutoff=float(cfg.get("cutoff", 1.0)),
        )


# shipped presets
PRESETS: dict[str, ContinuousModel] = {
    # d=3, nu=|k|, v = 1{|k|<=1} |k|^{-1/2}: the physically motivated infrared-singular case
    "infrared_d3": ContinuousModel(3, NuProfile(), 0.0, 1.0, -0.5, 1.0),
    "bounded_d3": ContinuousModel(3, NuProfile(), 0.0, 1.0, 0.0, 1.0),
    "massive_d3": ContinuousModel(3, NuProfile(), 0.5, 1.0, -0.5, 1.0),
}


def load_model(path: str | Path) -> ContinuousModel:
    with open(path) as fh:
        return ContinuousModel.from_config(json.load(fh))


@dataclass(frozen=True)
class ModeSet:
    """Finite list of boson modes (omega_j, v_j).

    ``couplings`` already carry the quadrature weight, so sum(v_j**2)
    approximates ||v||^2.
    """

    omegas: np.ndarray
    couplings: np.ndarray

    def __post_init__(self):
        om = np.atleast_1d(np.asarray(self.omegas, dtype=float))
        cp = np.atleast_1d(np.asarray(self.couplings))
        if np.iscomplexobj(cp):
            if np.any(np.imag(cp) != 0):
                raise ValueError("couplings must be real")
            cp = np.real(cp)
        cp = cp.astype(float)
        if om.ndim != 1 or om.shape != cp.shape:
            raise ValueError("omegas and couplings must be 1-d arrays of equal length")
        if len(om) == 0:
            raise ValueError("mode set must be non-empty")
        if not np.all(om > 0) or not np.all(np.isfinite(om)):
            raise ValueError("all frequencies must be positive and finite")
        if not np.all(np.isfinite(cp)):
            raise ValueError("couplings must be finite")
        object.__setattr__(self, "omegas", om)
        object.__setattr__(self, "couplings", cp)

    def __len__(self):
        return len(self.omegas)

    @classmethod
    def from_pairs(cls, pairs) -> "ModeSet":
        arr = np.asarray(pairs, dtype=float).reshape(-1, 2)
        return cls(arr[:, 0], arr[:, 1])

    def pairs(self) -> list[list[float]]:
        return [[float(w), float(v)] for w, v in zip(self.omegas, self.couplings)]

    def norm_sq(self) -> float:
        return float(np.sum(self.couplings**2))

    def omega_weighted_norm_sq(self) -> float:
        return float(np.sum(self.couplings**2 / self.omegas))


def _unit_gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def radial_nodes(model: ContinuousModel, n_nodes: int, rule: str = "gauss-legendre"):
    """Quadrature nodes r_j and weights q_j on [0, cutoff] for the radial integral."""
    if n_nodes < 1:
        raise ValueError("n_nodes must be >= 1")
    if rule not in RULES:
        raise ValueError(f"unknown quadrature rule {rule!r}; choose from {RULES}")
    u, w = _unit_gauss_legendre(n_nodes)
    K = model.cutoff
    if rule == "gauss-legendre" or model.delta >= 0:
        return K * u, K * w
    # r = K u^p flattens the r^(2 delta + d - 1) endpoint behaviour of |v|^2 r^(d-1)
    p = 2.0 / (2.0 * model.delta + model.dimension)
    return K * u**p, K * p * u ** (p - 1.0) * w


def discretize(model: ContinuousModel, n_nodes: int, rule: str = "gauss-legendre") -> ModeSet:
    """Quadrature discretization of a radial model into a ModeSet."""
    r, q = radial_nodes(model, n_nodes, rule)
    s = sphere_area(model.dimension)
    omegas = model.omega(r)
    if model.amplitude == 0:
        couplings = np.zeros_like(r)
    else:
        couplings = model.amplitude * r**model.delta * np.sqrt(q * s * r ** (model.dimension - 1))
    return ModeSet(omegas, couplings)


# --- hypothesis checks -------------------------------------------------------


@dataclass
class Clause:
    name: str
    passed: bool
    detail: str
    assumed: bool = False


@dataclass
class ValidationReport:
    clauses: list[Clause]

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.clauses)

    def __getitem__(self, name: str) -> Clause:
        for c in self.clauses:
            if c.name == name:
                return c
        raise KeyError(name)

    def failed(self) -> list[str]:
        return [c.name for c in self.clauses if not c.passed]

    def to_dict(self) -> dict:
        return {"all_passed": self.all_passed, "clauses": [asdict(c) for c in self.clauses]}


def _quad(f, a, b, points=None) -> tuple[float, float, str]:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        pts = None
        if points:
            pts = sorted({p for p in points if a < p < b})
        val, err = integrate.quad(f, a, b, points=pts or None, limit=200)
    msg = "; ".join(str(w.message).splitlines()[0] for w in caught)
    return val, err, msg


def _angular(g: Callable[[float], float], d: int) -> float:
    """Integral over the unit sphere S^{d-1} of g(cos theta)."""
    if d == 1:
        return g(1.0) + g(-1.0)
    if d == 2:
        val, *_ = integrate.quad(g, -1.0, 1.0, weight="alg", wvar=(-0.5, -0.5), limit=200)
        return 2.0 * val
    val, *_ = integrate.quad(g, -1.0, 1.0, weight="alg", wvar=((d - 3) / 2, (d - 3) / 2), limit=200)
    return sphere_area(d - 1) * val


def _shifted_norm(r, p, u):
    return math.sqrt(max(r * r + p * p + 2.0 * r * p * u, 0.0))


def infrared_integral(model: ContinuousModel, p: float) -> tuple[float, str]:
    """int |v(k)| / (sqrt(nu(k)) nu(k+p)) dk for a shift of length p."""
    nu, d = model.nu, model.dimension

    def radial(r):
        if r == 0.0:
            return 0.0
        base = abs(model.amplitude) * r**model.delta / math.sqrt(nu(r)) * r ** (d - 1)
        if p == 0.0:
            return base / nu(r)

        def g(u):
            q = _shifted_norm(r, p, u)
            return 0.0 if q == 0.0 else 1.0 / nu(q)

        return base * _angular(g, d)

    inner = sphere_area(d) if p == 0.0 else 1.0
    val, err, msg = _quad(radial, 0.0, model.cutoff, points=[p])
    return inner * val, f"abserr={err:.2e}" + (f" [{msg}]" if msg else "")


def difference_integral(model: ContinuousModel, p: float, alpha: float) -> tuple[float, str]:
    """int |v(k+p) - v(k)| / (sqrt(nu(k)) |p|^alpha) dk for a shift of length p > 0."""
    nu, d, K = model.nu, model.dimension, model.cutoff

    def vr(q):
        if q > K:
            return 0.0
        if q == 0.0:
            return math.inf if model.delta < 0 else (model.amplitude if model.delta == 0 else 0.0)
        return model.amplitude * q**model.delta

    def radial(r):
        if r == 0.0:
            return 0.0
        v0 = vr(r)

        def g(u):
            val = abs(vr(_shifted_norm(r, p, u)) - v0)
            return val if math.isfinite(val) else 0.0

        return r ** (d - 1) / math.sqrt(nu(r)) * _angular(g, d)

    val, err, msg = _quad(radial, 0.0, K + p, points=[p, K - p, K])
    return val / p**alpha, f"abserr={err:.2e}" + (f" [{msg}]" if msg else "")


def validate_hypotheses(model: ContinuousModel, alpha: float = 0.5,
                        probes: tuple[float, ...] = PROBE_RADII) -> ValidationReport:
    """Check the standing hypotheses clause by clause.

    L^2 conditions are decided from power counting at r=0; the two integral
    conditions of the massless ground-state theorem are evaluated by adaptive
    quadrature at the probe shifts and must be finite everywhere on the grid.
    """
    d, delta, a = model.dimension, model.delta, model.nu.exponent
    m = model.mass
    clauses: list[Clause] = []

    clauses.append(Clause("omega_positive", True, "radial power profile, positive for r > 0"))
    ok = 2 * delta + d > 0
    clauses.append(Clause("v_in_L2", ok, f"2*delta + d = {2 * delta + d:g} must be > 0"))
    if m > 0:
        ok_w = ok
        det = "m > 0: omega >= m so the condition reduces to v in L2"
    else:
        ok_w = ok and (2 * delta + d - a > 0)
        det = f"m = 0: 2*delta + d - nu_exponent = {2 * delta + d - a:g} must be > 0"
    clauses.append(Clause("omega_inv_sqrt_v_in_L2", ok_w, det))
    clauses.append(Clause("symmetry", True, "radial nu and real radial v are even and real by construction"))

    clauses.append(Clause("nu_holder", True, "locally Hoelder continuity not certifiable numerically",
                          assumed=True))
    clauses.append(Clause("nu_unbounded", True, "power profile with positive exponent diverges as |k| -> inf"))
    # nu^{-1/2} v ~ r^(delta - a/2); L^q near zero iff q (delta - a/2) + d > 0, strict at q=2 gives q=2+eps
    expo = delta - a / 2
    ok_eps = ok and (expo >= 0 or 2 * expo + d > 0)
    clauses.append(Clause("nu_inv_sqrt_v_in_L2_plus_eps", ok_eps,
                          f"local exponent of nu^(-1/2) v is {expo:g}; need 2*{expo:g} + d > 0"))

    # integral conditions
    power_ok = (d - 1 + delta - 1.5 * a > -1) and (d - a > 0) and ok
    vals, failed_probe = [], []
    for p in probes:
        try:
            val, diag = infrared_integral(model, p)
        except Exception as exc:  # quadrature failure is a clause failure, never a crash
            val, diag = math.nan, f"error: {exc}"
        vals.append(f"p={p:g}: {val:.6g} ({diag})")
        if not math.isfinite(val):
            failed_probe.append(p)
    ok_int = power_ok and not failed_probe
    clauses.append(Clause("infrared_integral_bounded", ok_int,
                          ("power counting " + ("ok" if power_ok else "fails")) + "; " + "; ".join(vals)))

    vals, failed_probe = [], []
    for p in probes:
        if p == 0.0:
            continue
        try:
            val, diag = difference_integral(model, p, alpha)
        except Exception as exc:
            val, diag = math.nan, f"error: {exc}"
        vals.append(f"p={p:g}: {val:.6g} ({diag})")
        if not math.isfinite(val):
            failed_probe.append(p)
    ok_diff = ok and power_ok and not failed_probe
    clauses.append(Clause("holder_difference_bounded", ok_diff, f"alpha={alpha:g}; " + "; ".join(vals)))
    return ValidationReport(clauses)
