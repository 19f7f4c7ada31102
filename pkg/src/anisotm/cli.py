"""Config-driven experiment runner.

A config is a JSON object::

    {"command": "sweep",
     "gauge": {"form": "pnorm", "p": 2, "N": 2},
     "params": {"q": 2, "beta": 0, "lam_ratio": 1.0},
     "controls": {"theorem": "T11", "n_list": [4, 8, 16, 32, 64]},
     "seed": 0,
     "output": "out"}

``params`` takes either ``lam`` (absolute) or ``lam_ratio`` (lam / lambda_N).
Output files are written to ``--out`` (or ``output``) as ``<command>.json`` or
``<command>.csv``; a one-line JSON summary goes to stdout.  Outputs contain no
timestamps and are byte-identical for the same config and seed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import partial
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import finsler, functionals, profiles, rearrange, seqopt, supsearch
from .finsler import Gauge, GaugeError, PolarConvergenceError, QuadratureBudgetError, gauge_from_dict
from .functionals import ParamError, TMParams, Theorem

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_CONFIG = 2
EXIT_NONCONVERGENCE = 3

COMMANDS = ("verify", "sweep", "sup", "mu", "symcheck")
MODULES = ("finsler", "profiles", "functionals", "rearrange", "seqopt", "supsearch")

DEFAULT_CONTROLS: dict[str, dict[str, Any]] = {
    "verify": {"module": "all"},
    "sweep": {"theorem": "T11", "n_list": [4, 8, 12, 16, 24, 32, 48, 64], "drop": 3,
              "fit": None, "target": None, "n_nodes": 2048},
    "sup": {"kind": "identity", "family": "moser", "budget": 10000,
            "lam_ratios": [round(0.02 * i, 2) for i in range(1, 50)] + [0.99],
            "n_list": [4, 8, 16, 32, 64, 128, 256, 512]},
    "mu": {"h_grid": [1.0, 2.0, 3.0, 4.0, 5.0, 6.0], "K": None, "starts": 4},
    "symcheck": {"count": 20, "n_grid": None, "levels": None},
}
SUP_KINDS = ("atmsc", "atmc", "identity", "band", "trend")


class ConfigError(ValueError):
    pass


class NonConvergence(RuntimeError):
    pass


def _seeds(seed: int, n: int) -> list[int]:
    """Independent child seeds split from the config seed."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    gauge: dict
    params: dict = field(default_factory=dict)
    controls: dict = field(default_factory=dict)
    seed: int = 0
    output: str = "out"

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"command: expected one of {', '.join(COMMANDS)}, got {self.command!r}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ConfigError("seed: expected a nonnegative integer")
        if not isinstance(self.gauge, dict):
            raise ConfigError("gauge: expected an object")
        known = DEFAULT_CONTROLS[self.command]
        for key in self.controls:
            if key not in known:
                raise ConfigError(f"controls.{key}: unknown control for {self.command!r}")
        g = self._parse_gauge()
        self._parse_params(g.N, lam_N=1.0)
        c = self.merged_controls()
        if self.command == "verify" and c["module"] not in MODULES + ("all",):
            raise ConfigError(f"controls.module: expected one of {', '.join(MODULES)} or 'all'")
        if self.command == "sweep":
            try:
                Theorem(c["theorem"])
            except ValueError:
                raise ConfigError(f"controls.theorem: unknown theorem {c['theorem']!r}") from None
            ns = c["n_list"]
            if not ns or any(int(n) != n or n <= 0 for n in ns) or any(b <= a for a, b in zip(ns, ns[1:])):
                raise ConfigError("controls.n_list: expected increasing positive integers")
        if self.command == "sup" and c["kind"] not in SUP_KINDS:
            raise ConfigError(f"controls.kind: expected one of {', '.join(SUP_KINDS)}")

    def _parse_gauge(self) -> Gauge:
        try:
            return gauge_from_dict(self.gauge)
        except (GaugeError, TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"gauge: {exc}") from None

    def _parse_params(self, N: int, lam_N: float) -> TMParams:
        p = dict(self.params)
        if "lam" in p and "lam_ratio" in p:
            raise ConfigError("params: give lam or lam_ratio, not both")
        ratio_ = p.pop("lam_ratio", None)
        if "lam" not in p:
            p["lam"] = (1.0 if ratio_ is None else ratio_) * lam_N
        p.setdefault("q", float(N))
        p.setdefault("beta", 0.0)
        allowed = set(TMParams.__dataclass_fields__) - {"N"}
        for key in p:
            if key not in allowed:
                raise ConfigError(f"params.{key}: unknown parameter")
        try:
            return TMParams(N=N, **p)
        except (ParamError, TypeError) as exc:
            raise ConfigError(f"params: {exc}") from None

    def merged_controls(self) -> dict:
        return {**DEFAULT_CONTROLS[self.command], **self.controls}

    def build(self) -> tuple[Gauge, TMParams]:
        g = self._parse_gauge()
        return g, self._parse_params(g.N, g.constants.lambda_N)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config: expected a JSON object")
        unknown = set(data) - {"command", "gauge", "params", "controls", "seed", "output"}
        if unknown:
            raise ConfigError(f"{sorted(unknown)[0]}: unknown config field")
        for key in ("command", "gauge"):
            if key not in data:
                raise ConfigError(f"{key}: missing required field")
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_json(Path(path).read_text())

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


# -- output -------------------------------------------------------------------


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")
    return obj


def _context(cfg: ExperimentConfig, g: Gauge, params: TMParams) -> dict:
    ctx = {f"param_{k}": v for k, v in params.to_dict().items()}
    ctx["lam_ratio"] = params.lam / g.constants.lambda_N
    ctx["gauge"] = json.dumps(g.to_dict(), sort_keys=True)
    ctx["command"] = cfg.command
    ctx["seed"] = cfg.seed
    return ctx


def _write(out_dir: Path, cfg: ExperimentConfig, fmt: str, report: dict, rows: list[dict],
           ctx: dict) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [{**ctx, **r} for r in rows]
    if fmt == "json":
        path = out_dir / f"{cfg.command}.json"
        doc = {"config": cfg.to_dict(), "report": report, "rows": rows}
        path.write_text(json.dumps(_clean(doc), sort_keys=True, indent=2) + "\n")
        return path
    path = out_dir / f"{cfg.command}.csv"
    cols: list[str] = []
    for r in rows:
        cols += [k for k in r if k not in cols]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _csv_cell(v) for k, v in _clean(r).items()})
    path.write_text(buf.getvalue())
    return path


def _csv_cell(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, dict)):
        return json.dumps(v, sort_keys=True)
    return v


def _pmap(fn: Callable, items: Sequence, jobs: int) -> list:
    """Ordered map; a process pool when jobs > 1."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# -- verify -------------------------------------------------------------------


def _check(name: str, value: float, bound: float, ok: bool | None = None) -> dict:
    return {"check": name, "value": float(value), "bound": float(bound),
            "passed": bool(value <= bound if ok is None else ok)}


def _verify_finsler(g: Gauge, params: TMParams, seed: int) -> list[dict]:
    rng = np.random.default_rng(seed)
    xi = rng.normal(size=(200, g.N))
    F = g.value(xi)
    F0 = g.polar(xi)
    euler = np.max(np.abs(np.einsum("ij,ij->i", xi, g.grad(xi)) - F) / F)
    euler0 = np.max(np.abs(np.einsum("ij,ij->i", xi, g.polar_grad(xi)) - F0) / F0)
    # the maximiser of <x, xi> over {F <= 1} is grad F0(x)
    duality = np.max(np.abs(g.value(g.polar_grad(xi)) - 1.0))
    c = g.constants
    coarea = abs(finsler.coarea_integral(g) / (g.N * c.kappa_N) - 1.0)
    checks = [
        _check("euler_identity_F", euler, 1e-6),
        _check("euler_identity_F0", euler0, 1e-6),
        _check("duality_F_of_grad_F0", duality, 1e-6),
        _check("coarea_constant", coarea, 1e-6),
        _check("gamma_consistency", abs(c.gamma**g.N * c.omega_N / c.kappa_N - 1.0), 1e-12),
    ]
    exact = g.exact_wulff_volume()
    if exact is not None:
        checks.append(_check("kappa_exact", abs(c.kappa_N - exact), 1e-3))
    checks.append({"check": "kappa_N", "value": c.kappa_N, "bound": math.inf, "passed": True})
    return checks


def _verify_profiles(g: Gauge, params: TMParams, seed: int) -> list[dict]:
    ns = np.arange(4, 65)
    us = [profiles.moser_profile(int(n), g.N, params.beta, g) for n in ns]
    dn = max(abs(u.dirichlet_norm() - 1.0) for u in us)
    slope, _ = supsearch.fit_growth(np.log(ns), np.log([u.lq_norm(params.q) for u in us]))
    return [_check("moser_dirichlet_norm", dn, 1e-8),
            _check("lq_norm_loglog_slope", abs(slope + 1.0 / g.N), 0.05)]


def _verify_functionals(g: Gauge, params: TMParams, seed: int) -> list[dict]:
    N, q, beta = g.N, params.q, params.beta
    j0 = functionals.phi_start_index(N, q, beta)
    worst = 0.0
    for t in (1e-3, 0.5, 1.0, 3.0, 20.0):
        term = math.exp(j0 * math.log(t) - math.lgamma(j0 + 1.0))
        terms = [term]
        for j in range(j0 + 1, j0 + 400):
            term *= t / j
            terms.append(term)
        direct = math.fsum(terms)
        worst = max(worst, abs(functionals.phi_series(t, N, q, beta) / direct - 1.0))
    u = profiles.moser_profile(16, N, beta, g)
    cov = supsearch.gauge_covariance_check(u, params)
    return [_check("phi_series_vs_direct_sum", worst, 1e-12),
            _check("reduction_energy", cov["energy_reldiff"], 1e-4),
            _check("reduction_integral", cov["integral_reldiff"], 1e-4)]


def _verify_rearrange(g: Gauge, params: TMParams, seed: int) -> list[dict]:
    n = rearrange.default_grid(g.N)
    u = rearrange.bump_corpus(g.N, n, count=1, seed=seed)[0]
    star = rearrange.convex_symmetrization(u, g)
    lq = abs(star.lq_norm(params.q) / u.lq_norm(params.q) - 1.0)
    lhs, rhs = rearrange.check_polya_szego(u, g)
    return [_check("lq_preservation", lq, 0.02),
            {"check": "polya_szego", "value": rhs / lhs - 1.0, "bound": 0.05,
             "passed": bool(rhs <= 1.05 * lhs), "lhs": lhs, "rhs": rhs}]


def _verify_seqopt(g: Gauge, params: TMParams, seed: int) -> list[dict]:
    res = seqopt.mu_estimate(1.0, 2.0, 2.0, seed=seed)
    closed = math.sqrt(1.0 - math.exp(-1.0))
    u = profiles.moser_profile(32, g.N, 0.0, g)
    rep = seqopt.lemma32_check(u, math.exp(-2.0), 1.0, g, params.q)
    return [_check("mu_h1_vs_closed_form", abs(res.mu_upper - closed), 1e-6),
            _check("mu_kkt_residual", res.kkt_residual, 1e-6),
            _check("telescoping", rep.telescoping_error, 1e-12)]


def _verify_supsearch(g: Gauge, params: TMParams, seed: int) -> list[dict]:
    v, _ = profiles.scaled_moser(16, g.N, params.beta, params.a, params.q, g)
    eq = supsearch.equivalence_check(v, params, g)
    lam = 0.5 * g.constants.lambda_N
    small = supsearch.estimate_atmsc(g.N, params.q, lam, params.beta, g, budget=40, seed=seed)
    large = supsearch.estimate_atmsc(g.N, params.q, lam, params.beta, g, budget=80, seed=seed)
    return [_check("equivalence_integral", eq["integral_identity"], 1e-6),
            _check("equivalence_constraint", abs(eq["constraint_u"] - eq["constraint_v"]), 1e-9),
            _check("budget_monotone", small.log_value - large.log_value, 0.0)]


_VERIFY = {
    "finsler": _verify_finsler,
    "profiles": _verify_profiles,
    "functionals": _verify_functionals,
    "rearrange": _verify_rearrange,
    "seqopt": _verify_seqopt,
    "supsearch": _verify_supsearch,
}


def run_verify(cfg: ExperimentConfig, jobs: int = 1) -> tuple[int, dict, list[dict]]:
    g, params = cfg.build()
    c = cfg.merged_controls()
    modules = MODULES if c["module"] == "all" else (c["module"],)
    seeds = dict(zip(MODULES, _seeds(cfg.seed, len(MODULES))))
    rows = []
    for m in modules:
        rows += [{"module": m, **chk} for chk in _VERIFY[m](g, params, seeds[m])]
    failed = [r["check"] for r in rows if not r["passed"]]
    report = {"modules": list(modules), "failed": failed, "kappa_N": g.constants.kappa_N}
    return (EXIT_VIOLATION if failed else EXIT_OK), report, rows


# -- sweep / sup / mu / symcheck --------------------------------------------------


def run_sweep(cfg: ExperimentConfig, jobs: int = 1) -> tuple[int, dict, list[dict]]:
    g, params = cfg.build()
    c = cfg.merged_controls()
    rep = supsearch.sharpness_sweep(c["theorem"], params, g, [int(n) for n in c["n_list"]],
                                    drop=int(c["drop"]), fit=c["fit"], target=c["target"],
                                    n_nodes=int(c["n_nodes"]))
    doc = rep.to_dict()
    rows = [{"theorem": rep.theorem, "fitted_exponent": rep.fitted_exponent,
             "predicted_exponent": rep.predicted_exponent, **pt} for pt in doc.pop("points")]
    return EXIT_OK, doc, rows


def _atmsc_point(x: float, N: int, q: float, beta: float, g: Gauge, family: str,
                 budget: int, seed: int) -> dict:
    est = supsearch.estimate_atmsc(N, q, x * g.constants.lambda_N, beta, g,
                                   supsearch.family_by_name(family), budget, seed)
    return {"lam_ratio": x, **est.to_dict()}


def run_sup(cfg: ExperimentConfig, jobs: int = 1) -> tuple[int, dict, list[dict]]:
    g, params = cfg.build()
    c = cfg.merged_controls()
    N, q, beta = g.N, params.q, params.beta
    fam = supsearch.family_by_name(c["family"])
    budget, seed = int(c["budget"]), _seeds(cfg.seed, 1)[0]
    kind = c["kind"]
    if kind == "atmsc":
        est = supsearch.estimate_atmsc(N, q, params.lam, beta, g, fam, budget, seed)
        return EXIT_OK, est.to_dict(), [est.to_dict()]
    if kind == "atmc":
        est = supsearch.estimate_atmc(N, q, beta, params.a, params.b, g, fam, budget, seed)
        return EXIT_OK, est.to_dict(), [est.to_dict()]
    if kind == "trend":
        pts = supsearch.atmc_moser_trend(N, q, beta, params.a, params.b, g, c["n_list"])
        ns = np.array([n for n, _ in pts])
        ys = np.array([y for _, y in pts])
        half = len(ns) // 2
        slope, r2 = supsearch.fit_growth(np.log(ns[half:]), ys[half:])
        report = {"slope_top_half": slope, "r_squared": r2,
                  "divergent": bool(slope > 0.05 and r2 >= 0.98)}
        return EXIT_OK, report, [{"n": n, "log_value": y} for n, y in pts]
    ratios = [float(x) for x in c["lam_ratios"]]
    terms = _pmap(partial(_atmsc_point, N=N, q=q, beta=beta, g=g, family=c["family"],
                          budget=budget, seed=seed), ratios, jobs)
    if kind == "band":
        rows = []
        for t in terms:
            x = t["lam_ratio"]
            w = (1.0 - x ** (N - 1)) ** (q * params.damp / N)
            rows.append({**t, "scaled": t["value"] * w})
        scaled = [r["scaled"] for r in rows]
        return EXIT_OK, {"band_min": min(scaled), "band_max": max(scaled)}, rows
    if params.b > N:
        raise ConfigError("params.b: the identity needs b <= N")
    lhs = supsearch.estimate_atmc(N, q, beta, params.a, params.b, g, fam, budget, seed)
    rows = []
    for t in terms:
        br = supsearch.atmc_bracket(t["lam_ratio"], N, q, beta, params.a, params.b)
        rows.append({**t, "bracket": br, "log_product": math.log(br) + t["log_value"]})
    best = max(rows, key=lambda r: r["log_product"])
    report = {"lhs": lhs.value, "rhs": math.exp(best["log_product"]),
              "reldiff": abs(math.expm1(lhs.log_value - best["log_product"])),
              "argmax_ratio": best["lam_ratio"], "lhs_estimate": lhs.to_dict()}
    return EXIT_OK, report, rows


def _mu_point(h: float, q: float, N: float, K, starts: int, seed: int) -> dict:
    res = seqopt.mu_estimate(h, q, N, K=K, starts=starts, seed=seed)
    row = {"h": h, "mu_upper": res.mu_upper, "kkt_residual": res.kkt_residual,
           "active_constraint": res.active_constraint, "K": res.K, "converged": res.converged}
    if h > 1:
        asym = seqopt.mu_asymptotic(h, q, N)
        row.update(asymptotic=asym, ratio=res.mu_upper / asym)
    return row


def run_mu(cfg: ExperimentConfig, jobs: int = 1) -> tuple[int, dict, list[dict]]:
    g, params = cfg.build()
    c = cfg.merged_controls()
    hs = [float(h) for h in c["h_grid"]]
    seed = _seeds(cfg.seed, 1)[0]
    K = None if c["K"] is None else int(c["K"])
    try:
        rows = _pmap(partial(_mu_point, q=params.q, N=float(g.N), K=K, starts=int(c["starts"]),
                             seed=seed), hs, jobs)
    except seqopt.SeqError as exc:
        raise ConfigError(f"controls.h_grid: {exc}") from None
    ratios = [r["ratio"] for r in rows if "ratio" in r]
    report = {"band": [min(ratios), max(ratios)] if ratios else None,
              "all_converged": all(r["converged"] for r in rows)}
    return (EXIT_OK if report["all_converged"] else EXIT_NONCONVERGENCE), report, rows


def _symcheck_one(u: rearrange.SampledFunction, g: Gauge, q: float, levels) -> dict:
    star = rearrange.convex_symmetrization(u, g)
    flat = np.sort(u.values.ravel())[::-1]
    cell = u.cell_measure
    # level measures of u and of u* at the sorted values, in cells
    flat = flat[flat > 0]
    levels_t = flat[:: max(1, flat.size // 64)]
    mu_grid = u.level_measure(levels_t)
    mu_star = rearrange.profile_level_measure(star, levels_t)
    eq = float(np.max(np.abs(mu_grid - mu_star)) / cell)
    lhs, rhs = rearrange.check_polya_szego(u, g, levels)
    return {"equimeasurability_cells": eq,
            "lq_relerr": abs(star.lq_norm(q) / u.lq_norm(q) - 1.0),
            "polya_szego_grid": lhs, "polya_szego_symmetrized": rhs,
            "polya_szego_excess": rhs / lhs - 1.0}


def run_symcheck(cfg: ExperimentConfig, jobs: int = 1) -> tuple[int, dict, list[dict]]:
    g, params = cfg.build()
    c = cfg.merged_controls()
    n = rearrange.default_grid(g.N) if c["n_grid"] is None else int(c["n_grid"])
    corpus = rearrange.bump_corpus(g.N, n, count=int(c["count"]), seed=_seeds(cfg.seed, 1)[0])
    rows = _pmap(partial(_symcheck_one, g=g, q=params.q, levels=c["levels"]), corpus, jobs)
    rows = [{"index": i, **r} for i, r in enumerate(rows)]
    report = {
        "n_grid": n,
        "max_equimeasurability_cells": max(r["equimeasurability_cells"] for r in rows),
        "max_lq_relerr": max(r["lq_relerr"] for r in rows),
        "max_polya_szego_excess": max(r["polya_szego_excess"] for r in rows),
    }
    ok = report["max_polya_szego_excess"] <= 0.05 and report["max_lq_relerr"] <= 0.02
    return (EXIT_OK if ok else EXIT_VIOLATION), report, rows


RUNNERS = {"verify": run_verify, "sweep": run_sweep, "sup": run_sup, "mu": run_mu,
           "symcheck": run_symcheck}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="anisotm", description=__doc__.splitlines()[0])
    ap.add_argument("command", nargs="?", choices=COMMANDS,
                    help="overrides the command in the config")
    ap.add_argument("--config", required=True, help="JSON experiment config")
    ap.add_argument("--out", help="output directory (default: config 'output')")
    ap.add_argument("--seed", type=int, help="overrides the config seed")
    ap.add_argument("--jobs", type=int, default=1, help="worker processes for independent points")
    ap.add_argument("--format", choices=("csv", "json"), default="json")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        try:
            data = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
        except OSError as exc:
            raise ConfigError(f"{args.config}: {exc.strerror}") from None
        if isinstance(data, dict):
            if args.seed is not None:
                data["seed"] = args.seed
            if args.command is not None:
                data["command"] = args.command
        cfg = ExperimentConfig.from_dict(data)
        code, report, rows = RUNNERS[cfg.command](cfg, max(1, args.jobs))
        g, params = cfg.build()
        path = _write(Path(args.out or cfg.output), cfg, args.format, report, rows,
                      _context(cfg, g, params))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonConvergence, PolarConvergenceError, QuadratureBudgetError) as exc:
        print(f"numerical non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    summary = {"command": cfg.command, "exit": code, "output": str(path), "report": report}
    print(json.dumps(_clean(summary), sort_keys=True))
    return code


if __name__ == "__main__":
    raise SystemExit(main())
