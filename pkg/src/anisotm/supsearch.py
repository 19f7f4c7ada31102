"""Lower bounds for the supremum constants and growth fits along extremal sequences.

Suprema are searched over Wulff-radial nonincreasing profiles from a small
parametric family.  Every estimate is the value of the functional at an
explicit profile, so it is a certified lower bound; the search itself is a
seeded compass search with restarts whose evaluation sequence does not depend
on the budget (a larger budget extends the same run).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .finsler import Gauge, euclidean
from .functionals import (
    Constraint,
    TMParams,
    Theorem,
    Variant,
    constraint_check,
    norm_power,
    ratio,
    tm_integral,
)
from .profiles import (
    ProfileError,
    RadialProfile,
    dilate,
    log_linear_profile,
    moser_profile,
    power_tail_profile,
    scale_values,
    solve_cn,
)
from .rearrange import euclidean_companion

__all__ = [
    "ProfileFamily",
    "SupEstimate",
    "moser_family",
    "knots_family",
    "power_family",
    "family_by_name",
    "pattern_search",
    "estimate_atmsc",
    "estimate_atmc",
    "atmc_bracket",
    "atmc_identity_check",
    "atmc_moser_trend",
    "atmsc_band",
    "SweepReport",
    "sharpness_sequence",
    "sharpness_sweep",
    "predicted_exponent",
    "fit_growth",
    "gauge_covariance_check",
    "equivalence_check",
]

MOSER_NODES = 257


@dataclass(frozen=True)
class ProfileFamily:
    name: str
    lower: tuple
    upper: tuple
    build: Callable[[np.ndarray, Gauge, float], RadialProfile] = field(repr=False, compare=False)
    start: tuple = ()

    @property
    def dim(self) -> int:
        return len(self.lower)

    def realize(self, x, g: Gauge, beta: float = 0.0) -> RadialProfile:
        x = np.clip(np.asarray(x, dtype=float), self.lower, self.upper)
        return self.build(x, g, beta)


def moser_family(n_max: float = 4000.0) -> ProfileFamily:
    """u_n with real n; x = (ln n,)."""
    def build(x, g, beta):
        return moser_profile(math.exp(x[0]), g.N, beta, g, n_nodes=MOSER_NODES)
    return ProfileFamily("moser", (math.log(0.5),), (math.log(n_max),), build, (math.log(8.0),))


def knots_family(m: int = 6, max_depth: float = 400.0) -> ProfileFamily:
    """Log-linear with m equal segments; x = (ln depth, ln w_1, ..., ln w_m)."""
    if not 1 <= m <= 11:
        raise ValueError("knots family supports 1 to 11 segments")

    def build(x, g, beta):
        return log_linear_profile(math.exp(x[0]), np.exp(x[1:]), g)
    lower = (math.log(0.25),) + (-4.0,) * m
    upper = (math.log(max_depth),) + (4.0,) * m
    return ProfileFamily(f"knots{m}", lower, upper, build, (math.log(4.0),) + (0.0,) * m)


def power_family(max_depth: float = 400.0) -> ProfileFamily:
    """(ln 1/r)^alpha on [e^-depth, 1]; x = (ln depth, ln alpha)."""
    def build(x, g, beta):
        return power_tail_profile(math.exp(x[0]), math.exp(x[1]), g)
    return ProfileFamily("power", (math.log(0.25), math.log(0.2)), (math.log(max_depth), math.log(3.0)),
                         build, (math.log(4.0), 0.0))


def family_by_name(name: str) -> ProfileFamily:
    if name == "moser":
        return moser_family()
    if name == "power":
        return power_family()
    if name.startswith("knots"):
        return knots_family(int(name[5:] or 6))
    raise ValueError(f"unknown profile family {name!r}")


@dataclass(frozen=True)
class SupEstimate:
    value: float
    log_value: float
    argmax: tuple
    evaluations: int
    saturated: bool
    budget_exhausted: bool
    family: str
    history: tuple = field(default=(), repr=False)

    def to_dict(self) -> dict:
        return {"value": self.value, "log_value": self.log_value, "argmax": list(self.argmax),
                "evaluations": self.evaluations, "saturated": self.saturated,
                "budget_exhausted": self.budget_exhausted, "family": self.family}


def pattern_search(objective: Callable[[np.ndarray], float], lower, upper, start, budget: int,
                   seed: int = 0, min_step: float = 1e-4,
                   patience: int = 6) -> tuple[float, np.ndarray, int, list]:
    """Maximise ``objective`` by compass search with random restarts.

    Returns (best value, best point, evaluations used, running best after each
    evaluation).  The search stops early once ``patience`` consecutive restarts
    fail to improve the incumbent.  The evaluation sequence depends only on
    ``seed``, so the running best of a larger budget extends that of a smaller
    one.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    width = upper - lower
    rng = np.random.default_rng(seed)
    best_val, best_x = -math.inf, np.asarray(start, dtype=float)
    trace = []
    used = 0

    def evaluate(x):
        nonlocal used, best_val, best_x
        used += 1
        try:
            val = float(objective(x))
        except (ProfileError, ValueError, FloatingPointError, ZeroDivisionError):
            val = -math.inf
        if not math.isfinite(val) and val != -math.inf:
            val = -math.inf
        if val > best_val:
            best_val, best_x = val, x.copy()
        trace.append(best_val)
        return val

    x = np.clip(np.asarray(start, dtype=float), lower, upper)
    stale = 0
    while used < budget and stale < patience:
        before = best_val
        fx = evaluate(x)
        step = 0.25 * width
        while used < budget and np.max(step / width) > min_step:
            improved = False
            for i in range(x.size):
                for sign in (1.0, -1.0):
                    if used >= budget:
                        break
                    trial = x.copy()
                    trial[i] = np.clip(trial[i] + sign * step[i], lower[i], upper[i])
                    if trial[i] == x[i]:
                        continue
                    ft = evaluate(trial)
                    if ft > fx:
                        x, fx, improved = trial, ft, True
                        break
            if not improved:
                step = step / 2.0
        stale = stale + 1 if best_val <= before + 1e-12 * abs(before) else 0
        # restart around the incumbent half the time, uniformly otherwise
        if rng.random() < 0.5 and np.all(np.isfinite(best_x)):
            x = np.clip(best_x + rng.normal(scale=0.1, size=x.size) * width, lower, upper)
        else:
            x = rng.uniform(lower, upper)
    return best_val, best_x, used, trace


def _normalize_gradient(u: RadialProfile, target: float = 1.0) -> RadialProfile:
    norm = u.dirichlet_norm()
    if norm == 0.0:
        raise ProfileError("profile has zero energy")
    return scale_values(u, target / norm)


def _atmsc_objective(params: TMParams, g: Gauge, family: ProfileFamily):
    def f(x):
        u = _normalize_gradient(family.realize(x, g, params.beta))
        return ratio(u, params, g, Theorem.ATMSC, check=False).log_value
    return f


def _finish(best, x, used, trace, budget, family, value_fn) -> SupEstimate:
    lv = value_fn(x) if np.isfinite(best) else best
    saturated = lv > math.log(np.finfo(float).max)
    return SupEstimate(
        value=math.inf if saturated else math.exp(lv),
        log_value=float(lv),
        argmax=tuple(float(t) for t in x),
        evaluations=used,
        saturated=bool(saturated),
        budget_exhausted=used >= budget,
        family=family.name,
        history=tuple(trace),
    )


def estimate_atmsc(N: int, q: float, lam: float, beta: float, g: Gauge,
                   family: ProfileFamily | None = None, budget: int = 400, seed: int = 0) -> SupEstimate:
    """Lower bound for sup_{||F(grad u)||_N <= 1} int Phi(lam (1-beta/N) u^(N/(N-1))) F0^-beta / ||u||_q^(q(1-beta/N))."""
    family = family or moser_family()
    lam_N = g.constants.lambda_N
    if not 0 < lam < lam_N:
        raise ValueError("need 0 < lam < lambda_N")
    params = TMParams(N=N, q=q, beta=beta, lam=lam)
    obj = _atmsc_objective(params, g, family)
    best, x, used, trace = pattern_search(obj, family.lower, family.upper, family.start, budget, seed)
    return _finish(best, x, used, trace, budget, family, obj)


def _allocate(u: RadialProfile, t: float, a: float, b: float, q: float) -> RadialProfile:
    """Scale so ||F(grad u)||^a = t, then dilate so ||u||_q^b = 1 - t."""
    v = _normalize_gradient(u, t ** (1.0 / a))
    norm = v.lq_norm(q)
    mu = (norm / (1.0 - t) ** (1.0 / b)) ** (q / v.N)
    return dilate(v, mu)


def _atmc_objective(params: TMParams, g: Gauge, family: ProfileFamily):
    def f(x):
        t = 1.0 / (1.0 + math.exp(-x[-1]))
        u = _allocate(family.realize(x[:-1], g, params.beta), t, params.a, params.b, params.q)
        return tm_integral(u, params, g, Variant.PHI).log_value
    return f


def estimate_atmc(N: int, q: float, beta: float, a: float, b: float, g: Gauge,
                  family: ProfileFamily | None = None, budget: int = 400, seed: int = 0) -> SupEstimate:
    """Lower bound for sup over ||F(grad u)||^a + ||u||_q^b <= 1 of int Phi(lambda_N (1-beta/N) u^(N/(N-1))) F0^-beta.

    The last search coordinate is logit(t), the share of the constraint spent
    on the gradient.
    """
    family = family or moser_family()
    params = TMParams(N=N, q=q, beta=beta, lam=g.constants.lambda_N, a=a, b=b)
    obj = _atmc_objective(params, g, family)
    lower = family.lower + (-12.0,)
    upper = family.upper + (12.0,)
    start = family.start + (0.0,)
    best, x, used, trace = pattern_search(obj, lower, upper, start, budget, seed)
    return _finish(best, x, used, trace, budget, family, obj)


def atmc_bracket(x: float, N: int, q: float, beta: float, a: float, b: float) -> float:
    """((1 - x^(a(N-1)/N)) / x^(b(N-1)/N))^((q/b)(1-beta/N)) with x = lam/lambda_N."""
    e = (N - 1.0) / N
    return ((1.0 - x ** (a * e)) / x ** (b * e)) ** (q / b * (1.0 - beta / N))


def atmc_identity_check(N: int, q: float, beta: float, a: float, b: float, lam_grid: Sequence[float],
                        g: Gauge, family: ProfileFamily | None = None, budget: int = 400,
                        seed: int = 0) -> dict:
    """Both sides of the ATMC / ATMSC identity, each with the same family and budget.

    ``lam_grid`` holds ratios lam/lambda_N in (0, 1).
    """
    if b > N:
        raise ValueError("the identity is stated for b <= N")
    lhs = estimate_atmc(N, q, beta, a, b, g, family, budget, seed)
    lam_N = g.constants.lambda_N
    terms = []
    for x in lam_grid:
        est = estimate_atmsc(N, q, x * lam_N, beta, g, family, budget, seed)
        terms.append((float(x), math.log(atmc_bracket(x, N, q, beta, a, b)) + est.log_value))
    x_best, log_rhs = max(terms, key=lambda t: t[1])
    reldiff = abs(math.expm1(lhs.log_value - log_rhs))
    return {"lhs": lhs.value, "rhs": math.exp(log_rhs), "reldiff": reldiff,
            "argmax_ratio": x_best, "terms": terms, "lhs_estimate": lhs.to_dict()}


def atmc_moser_trend(N: int, q: float, beta: float, a: float, b: float, g: Gauge,
                     n_list: Sequence[float], t_grid: int = 64) -> list[tuple[float, float]]:
    """(n, ln max_t integral) along u_n allocated by ``_allocate`` on a grid of shares t."""
    params = TMParams(N=N, q=q, beta=beta, lam=g.constants.lambda_N, a=a, b=b)
    ts = 1.0 / (1.0 + np.exp(-np.linspace(-8.0, 12.0, t_grid)))
    out = []
    for n in n_list:
        u = moser_profile(n, N, beta, g, n_nodes=MOSER_NODES)
        best = max(tm_integral(_allocate(u, t, a, b, q), params, g, Variant.PHI).log_value for t in ts)
        out.append((float(n), float(best)))
    return out


def atmsc_band(N: int, q: float, beta: float, g: Gauge, ratios: Sequence[float],
               family: ProfileFamily | None = None, budget: int = 400, seed: int = 0) -> list[dict]:
    """ATMSC(lam) * (1 - (lam/lambda_N)^(N-1))^(q(1-beta/N)/N) on a grid of ratios."""
    lam_N = g.constants.lambda_N
    rows = []
    for x in ratios:
        est = estimate_atmsc(N, q, x * lam_N, beta, g, family, budget, seed)
        weight = (1.0 - x ** (N - 1)) ** (q * (1.0 - beta / N) / N)
        rows.append({"ratio": float(x), "atmsc": est.value, "scaled": est.value * weight,
                     "argmax": list(est.argmax)})
    return rows


# -- sharpness sweeps ---------------------------------------------------------


@dataclass(frozen=True)
class SweepReport:
    theorem: str
    params: dict
    sequence: str
    fit: str
    target: str
    fitted_exponent: float
    predicted_exponent: float | None
    r_squared: float
    points: list
    divergent: bool

    def to_dict(self) -> dict:
        return {"theorem": self.theorem, "params": self.params, "sequence": self.sequence,
                "fit": self.fit, "target": self.target, "fitted_exponent": self.fitted_exponent,
                "predicted_exponent": self.predicted_exponent, "r_squared": self.r_squared,
                "divergent": self.divergent, "points": self.points}


def fit_growth(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Least-squares slope of y on x and R^2."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    A = np.c_[x, np.ones_like(x)]
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss if ss > 0 else 1.0
    return float(coef[0]), float(r2)


def sharpness_sequence(theorem: Theorem | str, params: TMParams, g: Gauge, n: float,
                       n_nodes: int = 2048) -> RadialProfile:
    """u_n for T11/T14, v_n = c_n u_n for T16, and the dilation of v_n for T15."""
    theorem = Theorem(theorem)
    u = moser_profile(n, g.N, params.beta, g, n_nodes)
    if theorem in (Theorem.T11, Theorem.T14, Theorem.ATMSC):
        return u
    v = scale_values(u, solve_cn(u, params.a, g.N, params.q))
    if theorem is Theorem.T16:
        return v
    return dilate(v, equivalence_dilation(v, params))


def equivalence_dilation(v: RadialProfile, params: TMParams) -> float:
    """lam = ||v||_q^((1-1/k) q/N), mapping the b = N constraint onto the kN one."""
    return v.lq_norm(params.q) ** ((1.0 - 1.0 / params.k) * params.q / params.N)


def predicted_exponent(theorem: Theorem | str, params: TMParams, g: Gauge) -> tuple[str, str, float]:
    """(fit mode, target, exponent) from the lower-bound asymptotics along the sequence."""
    theorem = Theorem(theorem)
    x = params.lam / g.constants.lambda_N
    N, p, q, damp = params.N, params.p, params.q, params.damp
    if x > 1.0 + 1e-12:
        return "linear", "ratio", x - 1.0
    if x < 1.0 - 1e-12:
        return "loglog", "ratio", 0.0
    if theorem is Theorem.T11:
        return "loglog", "integral", p * (N - 1.0) / N
    if theorem is Theorem.T14:
        return "loglog", "ratio", max(0.0, (q - p) / N * damp)
    return "loglog", "ratio", max(0.0, (q - p) / N * (1.0 - 1.0 / params.k) * damp)


def sharpness_sweep(theorem: Theorem | str, params: TMParams, g: Gauge, n_list: Sequence[float],
                    drop: int = 3, fit: str | None = None, target: str | None = None,
                    n_nodes: int = 2048) -> SweepReport:
    """Evaluate the theorem's ratio along its sequence and fit the growth.

    The fit ignores the ``drop`` smallest n.  A sweep is flagged divergent when
    the fitted exponent on the top half exceeds 0.05 with R^2 >= 0.98.
    """
    theorem = Theorem(theorem)
    n_list = [float(n) for n in n_list]
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be increasing")
    mode, tgt, pred = predicted_exponent(theorem, params, g)
    mode = fit or mode
    tgt = target or tgt
    points = []
    for n in n_list:
        u = sharpness_sequence(theorem, params, g, n, n_nodes)
        r = ratio(u, params, g, theorem)
        power = norm_power(params, theorem)
        log_int = r.log_value + (power * math.log(u.lq_norm(params.q)) if power else 0.0)
        points.append({"n": n, "log_ratio": r.log_value, "log_integral": log_int,
                       "saturated": r.saturated, "relative_error": r.relative_error,
                       "lq_norm": u.lq_norm(params.q), "dirichlet_norm": u.dirichlet_norm()})
    key = "log_ratio" if tgt == "ratio" else "log_integral"
    n_arr = np.array(n_list)
    y = np.array([pt[key] for pt in points])
    xs = np.log(n_arr) if mode == "loglog" else n_arr
    sl, r2 = fit_growth(xs[drop:], y[drop:])
    half = len(n_list) // 2
    top_sl, top_r2 = fit_growth(xs[half:], y[half:])
    return SweepReport(
        theorem=theorem.value,
        params=params.to_dict(),
        sequence="u_n" if theorem in (Theorem.T11, Theorem.T14) else
                 ("c_n u_n" if theorem is Theorem.T16 else "dilated c_n u_n"),
        fit=mode,
        target=tgt,
        fitted_exponent=sl,
        predicted_exponent=pred,
        r_squared=r2,
        points=points,
        divergent=bool(top_sl > 0.05 and top_r2 >= 0.98),
    )


# -- structural checks --------------------------------------------------------


def gauge_covariance_check(u_star: RadialProfile, params: TMParams) -> dict:
    """Both sides of the Wulff-to-Euclidean reduction on one profile.

    u* (Euclidean, nodes at gamma r) shares u#, so the q-norms agree, the
    F-energy is gamma^N times the Euclidean one and the weighted integral
    under F is gamma^beta times the Euclidean one.
    """
    g = u_star.gauge
    N = g.N
    gamma = g.constants.gamma
    e = euclidean(N)
    comp = euclidean_companion(u_star)
    lhs_int = tm_integral(u_star, params, g, Variant.PHI)
    rhs_int = tm_integral(comp, params, e, Variant.PHI)
    energy_rel = abs(u_star.dirichlet_energy() / (gamma**N * comp.dirichlet_energy()) - 1.0)
    integral_rel = abs(math.expm1(lhs_int.log_value - rhs_int.log_value - params.beta * math.log(gamma)))
    norm_rel = abs(u_star.lq_norm(params.q) / comp.lq_norm(params.q) - 1.0)
    return {"gamma": gamma, "energy_reldiff": energy_rel, "integral_reldiff": integral_rel,
            "norm_reldiff": norm_rel}


def equivalence_check(v: RadialProfile, params: TMParams, g: Gauge) -> dict:
    """Map a profile under the b = N constraint to the kN one and compare both sides.

    u = v(lam x) with lam = ||v||_q^((1-1/k)q/N); then
    T15 integral(u) * lam^(N-beta) = T16 integral(v) and
    T16 ratio(v) = lam^(N-beta) T15(u) / ||v||_q^(q(1-1/k)(1-beta/N)).
    """
    lam = equivalence_dilation(v, params)
    u = dilate(v, lam)
    c16 = constraint_check(v, params.replace(b=float(params.N)), g, Constraint.SUM_AB)
    c15 = constraint_check(u, params, g, Constraint.SUM_A_KN)
    i16 = tm_integral(v, params, g, Variant.PHI_EXACT_GROWTH_K)
    i15 = tm_integral(u, params, g, Variant.PHI_EXACT_GROWTH_K)
    w = params.N - params.beta
    norm_v = v.lq_norm(params.q)
    norm_u = u.lq_norm(params.q)
    return {
        "lam": lam,
        "constraint_v": c16.lhs,
        "constraint_u": c15.lhs,
        "norm_identity": abs(norm_u**(params.k * params.N) / norm_v**params.N - 1.0),
        "integral_identity": abs(math.expm1(i16.log_value - (i15.log_value + w * math.log(lam)))),
        "ratio_identity": abs(math.expm1(
            (i16.log_value - norm_power(params, Theorem.T16) * math.log(norm_v)) - i15.log_value)),
    }
