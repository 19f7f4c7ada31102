"""Truncated exponential Phi, norms and the singular Trudinger-Moser functionals.

All N-dimensional integrals of Wulff-radial profiles are reduced to
``N kappa_N int G(u(r)) r^(N-1-beta) dr`` and evaluated in the log domain, so a
functional that overflows double precision still carries a finite
``log_value``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import gammainc, gammaln

from .finsler import Gauge
from .profiles import RadialProfile

__all__ = [
    "ParamError",
    "DegenerateInputError",
    "ConstraintViolation",
    "TMParams",
    "Variant",
    "Theorem",
    "Constraint",
    "FunctionalValue",
    "ConstraintResult",
    "phi_start_index",
    "phi_series",
    "log_phi",
    "dirichlet_norm",
    "lq_norm",
    "tm_integral",
    "plateau_lower_bound",
    "ratio",
    "constraint_check",
    "norm_power",
]

LOG_MAX = math.log(np.finfo(float).max)
CONSTRAINT_TOL = 1e-9


class ParamError(ValueError):
    pass


class DegenerateInputError(ValueError):
    pass


class ConstraintViolation(ValueError):
    pass


@dataclass(frozen=True)
class TMParams:
    """Parameters shared by the functionals; ``lam`` is absolute, not a ratio.

    ``p`` defaults to ``q`` and ``a``, ``b`` default to ``N``.
    """

    N: int
    q: float
    beta: float
    lam: float
    p: float | None = None
    d: float = 1.0
    k: float = 2.0
    a: float | None = None
    b: float | None = None

    def __post_init__(self):
        if not isinstance(self.N, (int, np.integer)) or self.N < 2:
            raise ParamError("N must be an integer >= 2")
        if not self.beta < self.N:
            raise ParamError("β must be < N")
        if not self.beta >= 0:
            raise ParamError("β must be >= 0")
        if not self.q >= 1:
            raise ParamError("q must be >= 1")
        if not self.lam > 0:
            raise ParamError("λ must be > 0")
        if not self.k > 1:
            raise ParamError("k must be > 1")
        if not self.d > 0:
            raise ParamError("d must be > 0")
        for name in ("p", "a", "b"):
            default = self.q if name == "p" else self.N
            val = getattr(self, name)
            object.__setattr__(self, name, float(default if val is None else val))
        if not self.a > 0 or not self.b > 0:
            raise ParamError("a and b must be > 0")
        if not self.p > 0:
            raise ParamError("p must be > 0")

    @classmethod
    def from_ratio(cls, g: Gauge, ratio: float, **kw) -> "TMParams":
        """Set lam = ratio * lambda_N of the gauge."""
        return cls(N=g.N, lam=ratio * g.constants.lambda_N, **kw)

    def replace(self, **kw) -> "TMParams":
        return TMParams(**{**asdict(self), **kw})

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def damp(self) -> float:
        """1 - beta/N."""
        return 1.0 - self.beta / self.N


class Variant(str, enum.Enum):
    EXP_P = "EXP_P"
    PHI = "PHI"
    PHI_EXACT_GROWTH = "PHI_EXACT_GROWTH"
    PHI_EXACT_GROWTH_K = "PHI_EXACT_GROWTH_K"


class Theorem(str, enum.Enum):
    T11 = "T11"
    T14 = "T14"
    T15 = "T15"
    T16 = "T16"
    ATMSC = "ATMSC"


class Constraint(str, enum.Enum):
    GRAD_ONLY = "GRAD_ONLY"
    SUM_AB = "SUM_AB"
    SUM_A_KN = "SUM_A_KN"


@dataclass(frozen=True)
class FunctionalValue:
    value: float
    log_value: float
    relative_error: float
    truncation_terms: int = 0
    saturated: bool = False
    outside_hypothesis: bool = False

    @property
    def quadrature_error_estimate(self) -> float:
        if self.relative_error == 0.0:
            return 0.0
        return self.value * self.relative_error

    @classmethod
    def from_log(cls, log_value: float, rel: float, **kw) -> "FunctionalValue":
        if log_value == -math.inf:
            return cls(0.0, log_value, 0.0, **kw)
        saturated = log_value > LOG_MAX
        value = math.inf if saturated else math.exp(log_value)
        return cls(value, float(log_value), float(rel), saturated=saturated, **kw)


@dataclass(frozen=True)
class ConstraintResult:
    satisfied: bool
    slack: float
    lhs: float

    def __bool__(self):
        return self.satisfied


# -- Phi ----------------------------------------------------------------------


def phi_start_index(N: int, q: float, beta: float) -> int:
    """Smallest j kept in Phi: j >= theta if beta = 0, j > theta otherwise."""
    theta = q * (N - 1) / N * (1.0 - beta / N)
    if beta == 0:
        return max(0, math.ceil(theta - 1e-12))
    return math.floor(theta + 1e-12) + 1


def _log_phi_j0(t: np.ndarray, j0: int) -> np.ndarray:
    out = np.full(t.shape, -math.inf)
    pos = t > 0
    small = pos & (t <= 1.0)
    big = pos & ~small
    if np.any(small):
        ts = t[small]
        # t^j0/j0! * sum_m t^m j0!/(j0+m)!, terms < 1e-17 after 24 steps for t <= 1
        term = np.ones_like(ts)
        acc = np.ones_like(ts)
        for m in range(1, 25):
            term = term * ts / (j0 + m)
            acc += term
        out[small] = j0 * np.log(ts) - gammaln(j0 + 1.0) + np.log(acc)
    if np.any(big):
        tb = t[big]
        out[big] = tb + np.log(gammainc(j0, tb)) if j0 > 0 else tb
    return out


def log_phi(t, N: int, q: float, beta: float):
    """ln Phi_{N,q,beta}(t); -inf at t = 0."""
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0):
        raise ParamError("Phi is defined for t >= 0")
    res = _log_phi_j0(np.atleast_1d(arr), phi_start_index(N, q, beta))
    return res.reshape(arr.shape) if arr.ndim else float(res[0])


def phi_series(t, N: int, q: float, beta: float):
    """Phi_{N,q,beta}(t) = sum_{j >= j0} t^j / j!  (inf past the double range)."""
    with np.errstate(over="ignore"):
        return np.exp(log_phi(t, N, q, beta))


# -- norms --------------------------------------------------------------------


def _check(u: RadialProfile, g: Gauge):
    if u.N != g.N:
        raise ParamError(f"profile dimension {u.N} does not match gauge dimension {g.N}")


def dirichlet_norm(u: RadialProfile, g: Gauge) -> float:
    _check(u, g)
    if u.gauge is not g:
        u = RadialProfile(u.log_r, u.values, g)
    return u.dirichlet_norm()


def lq_norm(u: RadialProfile, g: Gauge, q: float) -> float:
    _check(u, g)
    if u.gauge is not g:
        u = RadialProfile(u.log_r, u.values, g)
    return u.lq_norm(q)


# -- functionals --------------------------------------------------------------


def _log_integrand(params: TMParams, variant: Variant):
    N, damp = params.N, params.damp
    expo = N / (N - 1.0)
    c = params.lam * damp
    if variant is Variant.EXP_P:
        def f(u):
            return c * u**expo + params.p * np.log(u)
        return f
    if variant is Variant.PHI:
        def f(u):
            return log_phi(c * u**expo, N, params.q, params.beta)
        return f
    growth = params.p / (N - 1.0) * damp
    if variant is Variant.PHI_EXACT_GROWTH_K:
        growth *= 1.0 - 1.0 / params.k
    elif variant is not Variant.PHI_EXACT_GROWTH:
        raise ParamError(f"unknown variant {variant!r}")
    log_d = math.log(params.d)

    def f(u):
        num = log_phi(c * u**expo, N, params.q, params.beta)
        return num - np.logaddexp(0.0, log_d + growth * np.log(u))
    return f


def tm_integral(u: RadialProfile, params: TMParams, g: Gauge, variant: Variant | str,
                max_ds: float = 0.05) -> FunctionalValue:
    """N kappa_N int numerator(u(r)) / denominator(u(r)) r^(N-1-beta) dr."""
    _check(u, g)
    if params.N != g.N:
        raise ParamError("params.N does not match the gauge")
    variant = Variant(variant)
    if np.any(np.diff(u.values) > 0):
        raise ParamError("profile must be nonincreasing")
    with np.errstate(divide="ignore"):
        L, rel = u.integrate_log(_log_integrand(params, variant), params.N - params.beta, max_ds)
    log_nk = math.log(params.N * g.constants.kappa_N)
    j0 = 0 if variant is Variant.EXP_P else phi_start_index(params.N, params.q, params.beta)
    return FunctionalValue.from_log(L + log_nk, rel, truncation_terms=j0)


def plateau_lower_bound(u: RadialProfile, params: TMParams, g: Gauge,
                        variant: Variant | str) -> float:
    """ln of the plateau contribution alone, a lower bound for tm_integral."""
    w = params.N - params.beta
    with np.errstate(divide="ignore"):
        G = float(_log_integrand(params, Variant(variant))(np.array([u.values[0]]))[0])
    return G + math.log(params.N * g.constants.kappa_N) + w * u.log_r[0] - math.log(w)


_THEOREM = {
    Theorem.T11: (Variant.EXP_P, Constraint.GRAD_ONLY),
    Theorem.T14: (Variant.PHI_EXACT_GROWTH, Constraint.GRAD_ONLY),
    Theorem.T15: (Variant.PHI_EXACT_GROWTH_K, Constraint.SUM_A_KN),
    Theorem.T16: (Variant.PHI_EXACT_GROWTH_K, Constraint.SUM_AB),
    Theorem.ATMSC: (Variant.PHI, Constraint.GRAD_ONLY),
}


def norm_power(params: TMParams, theorem: Theorem | str) -> float:
    """Exponent of ||u||_q dividing the integral in each inequality."""
    theorem = Theorem(theorem)
    if theorem is Theorem.T15:
        return 0.0
    power = params.q * params.damp
    if theorem is Theorem.T16:
        power *= 1.0 - 1.0 / params.k
    return power


def _outside(params: TMParams, theorem: Theorem) -> bool:
    p, q = params.p, params.q
    if theorem is Theorem.T11:
        if params.beta == 0:
            return p < q
        # the boundary p = q(1 - beta/N) is not covered
        return p <= q * params.damp
    if theorem is Theorem.ATMSC:
        return False
    return p < q


def ratio(u: RadialProfile, params: TMParams, g: Gauge, theorem: Theorem | str,
          check: bool = True, max_ds: float = 0.05) -> FunctionalValue:
    """Integral divided by the norm power of the chosen inequality."""
    theorem = Theorem(theorem)
    variant, kind = _THEOREM[theorem]
    if u.sup == 0.0:
        raise DegenerateInputError("degenerate input: zero profile")
    if check:
        res = constraint_check(u, params, g, kind)
        if not res.satisfied:
            raise ConstraintViolation(f"{kind.value} constraint violated (slack {res.slack:.3e})")
    num = tm_integral(u, params, g, variant, max_ds)
    power = norm_power(params, theorem)
    log_den = power * math.log(lq_norm(u, g, params.q)) if power else 0.0
    return FunctionalValue.from_log(num.log_value - log_den, num.relative_error,
                                    truncation_terms=num.truncation_terms,
                                    outside_hypothesis=_outside(params, theorem))


def constraint_check(u: RadialProfile, params: TMParams, g: Gauge, kind: Constraint | str,
                     tol: float = CONSTRAINT_TOL) -> ConstraintResult:
    """lhs of the constraint and slack = 1 - lhs.

    SUM_AB uses the exponent ``params.b``; the critical form has ``b = N``.
    """
    kind = Constraint(kind)
    grad = dirichlet_norm(u, g)
    if kind is Constraint.GRAD_ONLY:
        lhs = grad
    else:
        norm = lq_norm(u, g, params.q)
        expo = params.b if kind is Constraint.SUM_AB else params.k * params.N
        lhs = grad**params.a + norm**expo
    slack = 1.0 - lhs
    return ConstraintResult(slack >= -tol, slack, lhs)
