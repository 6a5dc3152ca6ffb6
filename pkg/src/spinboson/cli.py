"""Command-line frontend: ``sblab <command> --config run.json``.

Exit status: 0 when every declared threshold holds, 2 when one fails, 1 on
usage or configuration errors. Config values can be overridden through
environment variables ``SBLAB_<BLOCK>__<FIELD>`` (JSON-decoded when possible),
e.g. ``SBLAB_GIBBS__LAMBDA=0.3``.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from scipy import integrate

from . import __version__
from .fock import (TruncationSpec, build_hamiltonian, finite_diff_susceptibility, fkn_check,
                   ground_energy)
from .gibbs import GibbsParams, estimate_logZ_bridge, estimate_logZ_reweight
from .kernel import ExpSumKernel
from .model import PRESETS, RULES, ContinuousModel, ModeSet, discretize
from .observables import bloch_extrapolate, mass_sweep, susceptibility

ENV_PREFIX = "SBLAB_"
BLOCKS = ("model", "gibbs", "fock", "options")
GIBBS_FIELDS = {"lambda", "mu", "T", "budget", "burnin", "seed", "mode", "thin"}
FOCK_FIELDS = {"caps", "total_cap", "tol", "max_dim"}
MODEL_EXTRA = {"preset", "modes", "n_nodes", "rule"}


class ConfigError(ValueError):
    pass


# --- configuration ------------------------------------------------------------------


def _line_of(text: str, key: str) -> int | None:
    needle = f'"{key}"'
    for i, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return i
    return None


@dataclass
class RunConfig:
    raw: dict
    text: str = ""
    source: str = "<config>"
    model: ContinuousModel | None = None
    modes: ModeSet | None = None
    gibbs: dict = field(default_factory=dict)
    fock: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)

    def error(self, path: str, msg: str) -> ConfigError:
        line = _line_of(self.text, path.split(".")[-1]) if self.text else None
        where = f"{self.source}:{line}" if line else self.source
        return ConfigError(f"{where}: field '{path}': {msg}")

    @property
    def canonical(self) -> str:
        return json.dumps(self.raw, sort_keys=True, separators=(",", ":"))

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.canonical.encode()).hexdigest()

    def mode_set(self) -> ModeSet:
        return self.modes if self.modes is not None else discretize(
            self.model, int(self.raw["model"].get("n_nodes", 32)),
            self.raw["model"].get("rule", "gauss-legendre-stretched"))

    def truncation(self, n_modes: int) -> TruncationSpec:
        caps = self.fock.get("caps", 8)
        caps = (caps,) * n_modes if isinstance(caps, int) else tuple(caps)
        if len(caps) != n_modes:
            raise self.error("fock.caps", f"need {n_modes} caps, got {len(caps)}")
        kw = {"max_dim": int(self.fock["max_dim"])} if "max_dim" in self.fock else {}
        return TruncationSpec(caps, self.fock.get("total_cap"), **kw)

    def ladder(self) -> list[float]:
        T = self.gibbs.get("T", [4.0])
        return [float(t) for t in (T if isinstance(T, list) else [T])]

    def params(self, T: float | None = None) -> GibbsParams:
        return GibbsParams(float(self.gibbs.get("lambda", 0.0)), float(self.gibbs.get("mu", 0.0)),
                           float(T if T is not None else self.ladder()[0]))


def _apply_env(raw: dict, environ) -> dict:
    for key, value in sorted(environ.items()):
        if not key.startswith(ENV_PREFIX) or "__" not in key:
            continue
        block, _, name = key[len(ENV_PREFIX):].partition("__")
        block = block.lower()
        # field names are lower case apart from the horizon list "T"
        name = "T" if name.lower() == "t" else name.lower()
        if block not in BLOCKS:
            raise ConfigError(f"environment {key}: unknown block '{block}'")
        try:
            parsed = json.loads(value)
        except json.JSONDecodeError:
            parsed = value
        raw.setdefault(block, {})[name] = parsed
    return raw


def parse_config(text: str, source: str = "<config>", environ=None) -> RunConfig:
    try:
        raw = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: top level must be an object")
    raw = _apply_env(raw, os.environ if environ is None else environ)
    cfg = RunConfig(raw, text, source)
    unknown = set(raw) - set(BLOCKS)
    if unknown:
        raise cfg.error(sorted(unknown)[0], f"unknown block; expected one of {BLOCKS}")
    for block in BLOCKS:
        if not isinstance(raw.get(block, {}), dict):
            raise cfg.error(block, "must be an object")
    m = dict(raw.get("model", {"preset": "infrared_d3"}))
    raw.setdefault("model", m)
    try:
        if "modes" in m:
            cfg.modes = ModeSet.from_pairs(m["modes"])
        elif "preset" in m:
            if m["preset"] not in PRESETS:
                raise cfg.error("model.preset", f"unknown preset; choose from {sorted(PRESETS)}")
            base = PRESETS[m["preset"]].to_config()
            base.update({k: v for k, v in m.items() if k not in MODEL_EXTRA})
            cfg.model = ContinuousModel.from_config(base)
        else:
            cfg.model = ContinuousModel.from_config({k: v for k, v in m.items() if k not in MODEL_EXTRA})
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise cfg.error("model", str(exc)) from None
    if m.get("rule", RULES[-1]) not in RULES:
        raise cfg.error("model.rule", f"choose from {RULES}")
    cfg.gibbs = dict(raw.get("gibbs", {}))
    cfg.fock = dict(raw.get("fock", {}))
    cfg.options = dict(raw.get("options", {}))
    for name, allowed, block in (("gibbs", GIBBS_FIELDS, cfg.gibbs), ("fock", FOCK_FIELDS, cfg.fock)):
        bad = set(block) - allowed
        if bad:
            raise cfg.error(f"{name}.{sorted(bad)[0]}", f"unknown field; expected one of {sorted(allowed)}")
    for key in ("lambda", "mu"):
        if key in cfg.gibbs and not isinstance(cfg.gibbs[key], (int, float)):
            raise cfg.error(f"gibbs.{key}", "must be a number")
    if "budget" in cfg.gibbs and (not isinstance(cfg.gibbs["budget"], int) or cfg.gibbs["budget"] < 1):
        raise cfg.error("gibbs.budget", "must be a positive integer")
    try:
        ladder = cfg.ladder()
    except (TypeError, ValueError):
        raise cfg.error("gibbs.T", "must be a number or list of numbers") from None
    if any(not t > 0 for t in ladder):
        raise cfg.error("gibbs.T", "horizons must be > 0")
    if cfg.gibbs.get("mode", "reweight") not in ("reweight", "mcmc"):
        raise cfg.error("gibbs.mode", "must be 'reweight' or 'mcmc'")
    return cfg


def load_config(path: str | None, environ=None) -> RunConfig:
    if path is None:
        return parse_config("", "<defaults>", environ)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return parse_config(text, path, environ)


# --- output ------------------------------------------------------------------------


@dataclass
class Output:
    out_dir: Path
    cfg: RunConfig
    seed: int
    command: str
    fmt: str
    written: list[Path] = field(default_factory=list)

    @property
    def meta(self) -> dict:
        return {"command": self.command, "config_sha256": self.cfg.sha256, "seed": self.seed,
                "version": __version__, "config": self.cfg.raw}

    def _header(self) -> str:
        return f"# command={self.command} config_sha256={self.cfg.sha256} seed={self.seed} version={__version__}\n"

    def table(self, name: str, columns: Sequence[str], rows: Sequence[Sequence[Any]]) -> Path:
        if self.fmt == "json":
            path = self.out_dir / f"{name}.json"
            payload = {"meta": self.meta, "columns": list(columns),
                       "rows": [[_plain(v) for v in r] for r in rows]}
            path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        else:
            path = self.out_dir / f"{name}.csv"
            buf = io.StringIO()
            buf.write(self._header())
            writer = csv.writer(buf, lineterminator="\n")
            writer.writerow(columns)
            for r in rows:
                writer.writerow([_fmt(v) for v in r])
            path.write_text(buf.getvalue())
        self.written.append(path)
        return path

    def summary(self, name: str, payload: dict) -> Path:
        path = self.out_dir / f"{name}.json"
        path.write_text(json.dumps({"meta": self.meta, **_plain(payload)}, indent=2, sort_keys=True) + "\n")
        self.written.append(path)
        return path


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    return obj


# --- commands ------------------------------------------------------------------------


def _budget(cfg: RunConfig, default: int = 100_000) -> int:
    return int(cfg.gibbs.get("budget", default))


def cmd_kernel(cfg: RunConfig, rng, out: Output, workers: int) -> bool:
    modes = cfg.mode_set()
    kernel = ExpSumKernel.from_modes(modes)
    opts = cfg.options
    t_max, n_grid = float(opts.get("t_max", 10.0)), int(opts.get("n_grid", 101))
    grid = np.linspace(0.0, t_max, n_grid)
    out.table("kernel", ["t", "W"], list(zip(grid, np.atleast_1d(kernel(grid)))))
    closed = kernel.l1_norm()
    quad_val = 2.0 * integrate.quad(kernel.eval, 0.0, np.inf, epsabs=0.0, epsrel=1e-12, limit=400)[0]
    ref = 0.5 * (cfg.model.omega_weighted_norm_sq() if cfg.model is not None else modes.omega_weighted_norm_sq())
    tol = float(opts.get("l1_tolerance", 1e-8))

    def rel(a, b):
        return abs(a - b) / abs(b) if b != 0 else abs(a - b)

    rows = [["closed_form_sum", closed, ref, rel(closed, ref)],
            ["time_quadrature", quad_val, ref, rel(quad_val, ref)]]
    out.table("l1_report", ["method", "lhs", "rhs", "rel_diff"], rows)
    ok = all(r[3] < tol for r in rows)
    out.summary("kernel_summary", {"W0": kernel(0.0), "l1_norm": closed, "half_omega_norm_sq": ref,
                                   "tolerance": tol, "n_modes": len(modes), "passed": ok})
    return ok


def cmd_fkn_check(cfg: RunConfig, rng, out: Output, workers: int) -> bool:
    modes = cfg.mode_set()
    trunc = cfg.truncation(len(modes))
    thr = float(cfg.options.get("threshold", 3.0))
    rep = fkn_check(modes, cfg.params(), trunc, _budget(cfg, 1_000_000), rng, thr, workers)
    d = rep.to_dict()
    out.table("fkn_truncation", ["caps", "lhs"],
              [[" ".join(map(str, rep.caps[0])), rep.lhs], [" ".join(map(str, rep.caps[1])), rep.lhs_expanded]])
    ok = rep.passed and rep.truncation_converged
    out.summary("fkn_summary", d | {"threshold": thr, "passed": ok})
    return ok


def _log_z(cfg: RunConfig, rng, kernel, params, workers):
    budget = _budget(cfg)
    if cfg.gibbs.get("mode", "reweight") == "mcmc":
        return estimate_logZ_bridge(rng, kernel, params, budget, int(cfg.gibbs.get("burnin", 1000)),
                                    thin=int(cfg.gibbs.get("thin", 1)))
    return estimate_logZ_reweight(rng, kernel, params, budget, workers)


def cmd_energy(cfg: RunConfig, rng, out: Output, workers: int) -> bool:
    modes = cfg.mode_set()
    kernel = ExpSumKernel.from_modes(modes)
    ladder = cfg.ladder()
    samples = [(T, _log_z(cfg, child, kernel, cfg.params(T), workers)) for child, T in zip(rng.spawn(len(ladder)), ladder)]
    out.table("energy_ladder", ["T", "lnZ", "lnZ_stderr", "E_T", "E_T_stderr", "ess"],
              [[T, e.mean, e.stderr, -e.mean / T - 1.0, e.stderr / T, e.ess] for T, e in samples])
    summary: dict = {}
    ok = True
    if len(samples) >= 3:
        fit = bloch_extrapolate(samples)
        summary["bloch"] = fit.to_dict()
        estimate = fit.limit
    else:
        T, e = samples[-1]
        estimate = None
        summary["E_T_largest"] = {"T": T, "mean": -e.mean / T - 1.0, "stderr": e.stderr / T}
    if cfg.fock:
        trunc = cfg.truncation(len(modes))
        spec = ground_energy(build_hamiltonian(modes, cfg.params().lam, cfg.params().mu, trunc),
                             tol=float(cfg.fock.get("tol", 1e-11)))
        summary["fock"] = spec.to_dict()
        if estimate is not None:
            thr = float(cfg.options.get("threshold", 3.0))
            sig = estimate.sigmas_from(spec.e0)
            summary["sigmas_vs_fock"] = sig
            summary["threshold"] = thr
            ok = sig <= thr
    summary["passed"] = ok
    out.summary("energy_summary", summary)
    return ok


def cmd_susceptibility(cfg: RunConfig, rng, out: Output, workers: int) -> bool:
    modes = cfg.mode_set()
    params = cfg.params()
    if params.mu != 0:
        raise cfg.error("gibbs.mu", "susceptibility requires mu = 0")
    fit = susceptibility(rng, ExpSumKernel.from_modes(modes), params, _budget(cfg), cfg.ladder(),
                         cfg.gibbs.get("mode", "reweight"), int(cfg.gibbs.get("burnin", 0)),
                         int(cfg.gibbs.get("thin", 1)), workers)
    out.table("susceptibility_ladder", ["T", "value", "stderr", "ess"],
              [[T, p.mean, p.stderr, p.ess] for T, p in zip(fit.T, fit.points)])
    summary = {"fit": fit.to_dict()}
    ok = True
    if cfg.fock:
        ref = finite_diff_susceptibility(modes, params.lam, cfg.truncation(len(modes)),
                                         float(cfg.options.get("h", 1e-3)))
        thr = float(cfg.options.get("threshold", 3.0))
        sig = fit.limit.sigmas_from(ref)
        summary.update({"fock_finite_difference": ref, "sigmas_vs_fock": sig, "threshold": thr})
        ok = sig <= thr
    summary["passed"] = ok
    out.summary("susceptibility_summary", summary)
    return ok


def cmd_mass_sweep(cfg: RunConfig, rng, out: Output, workers: int) -> bool:
    if cfg.model is None:
        raise cfg.error("model", "mass sweep needs a continuous model, not explicit modes")
    masses = cfg.options.get("masses", [1.0, 0.3, 0.1, 0.03])
    if not masses:
        raise cfg.error("options.masses", "empty mass list")
    if cfg.params().mu != 0:
        raise cfg.error("gibbs.mu", "mass sweep requires mu = 0")
    eps = cfg.options.get("epsilon")
    try:
        sweep = mass_sweep(rng, cfg.model, cfg.params().lam, masses, _budget(cfg), cfg.ladder(),
                           int(cfg.raw["model"].get("n_nodes", 24)),
                           cfg.raw["model"].get("rule", "gauss-legendre-stretched"),
                           None if eps is None else float(eps), cfg.gibbs.get("mode", "reweight"),
                           int(cfg.gibbs.get("burnin", 0)), int(cfg.gibbs.get("thin", 1)), workers)
    except ValueError as exc:
        raise cfg.error("options", str(exc)) from None
    sweep.threshold = float(cfg.options.get("threshold", 4.0))
    out.table("mass_sweep", ["m", "lambda", "T", "value", "stderr", "ess"],
              [[r.m, r.lam, r.T, r.value, r.stderr, r.ess] for r in sweep.rows])
    out.summary("mass_sweep_summary", sweep.to_dict())
    return sweep.passed


COMMANDS = {
    "kernel": cmd_kernel,
    "fkn-check": cmd_fkn_check,
    "energy": cmd_energy,
    "susceptibility": cmd_susceptibility,
    "mass-sweep": cmd_mass_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sblab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int, help="overrides gibbs.seed (unsigned 64-bit)")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--format", choices=("csv", "json"), default="csv", help="format of table outputs")
    return parser


def main(argv: Sequence[str] | None = None, environ=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        cfg = load_config(args.config, environ)
        seed = args.seed if args.seed is not None else cfg.gibbs.get("seed", 0)
        if not isinstance(seed, int) or not 0 <= seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        out = Output(out_dir, cfg, seed, args.command, args.format)
        ok = COMMANDS[args.command](cfg, np.random.default_rng(seed), out, args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    for p in out.written:
        print(p)
    if not ok:
        print(f"{args.command}: acceptance threshold failed", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
