"""The discrete minimisation mu(h) behind the Trudinger-Moser exponent and the
sequence bound for radial profiles.

mu(h) = inf { ||a||_e : a >= 0, ||a||_1 = h, ||a||_N <= 1 },
||a||_e = (sum_k a_k^q e^k)^(1/q).

The problem is convex for q >= 1.  ``mu_estimate`` solves its KKT system by
nested bisection on the two multipliers, then polishes with multi-start
descent on a simplex parametrisation and keeps the best feasible point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.special import logsumexp, softmax

from .finsler import Gauge
from .profiles import RadialProfile, power_tail_profile, scale_values

__all__ = [
    "SeqError",
    "SeqVector",
    "MuResult",
    "Lemma32Report",
    "seq_norms",
    "default_truncation",
    "lagrange_point",
    "mu_estimate",
    "mu_asymptotic",
    "lemma32_check",
    "lemma32_corpus",
]

FEAS_TOL = 1e-10


class SeqError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SeqVector:
    entries: np.ndarray
    q: float
    N: float

    def __post_init__(self):
        a = np.array(self.entries, dtype=float).ravel()
        if np.any(a < 0) or not np.all(np.isfinite(a)):
            raise SeqError("sequence entries must be finite and nonnegative")
        object.__setattr__(self, "entries", a)

    @property
    def K(self) -> int:
        return self.entries.size - 1


def _log_e_norm_q(a: np.ndarray, q: float) -> float:
    """ln sum a_k^q e^k."""
    k = np.arange(a.size)
    pos = a > 0
    if not np.any(pos):
        return -math.inf
    return float(logsumexp(q * np.log(a[pos]) + k[pos]))


def seq_norms(a: SeqVector) -> tuple[float, float, float]:
    x = a.entries
    l1 = float(x.sum())
    lN = float(np.sum(x**a.N) ** (1.0 / a.N))
    L = _log_e_norm_q(x, a.q)
    le = 0.0 if L == -math.inf else math.exp(L / a.q)
    return l1, lN, le


def default_truncation(h: float, N: float, q: float = 2.0) -> int:
    """Mass sits in k <~ h^(N/(N-1)); the tail weight e^k a_k^q decays like
    e^(-k/(q-1)), so large q needs a longer sequence to push it below 1e-14."""
    return max(64, math.ceil(4.0 * h ** (N / (N - 1.0))), math.ceil(44.0 * (q - 1.0)))


def lagrange_point(h: float, q: float, K: int) -> np.ndarray:
    """Minimiser with only the sum constraint: a_k = h (1-r) r^k / (1-r^(K+1)), r = e^(-1/(q-1))."""
    if q <= 1:
        raise SeqError("the unconstrained Lagrange point needs q > 1")
    r = math.exp(-1.0 / (q - 1.0))
    w = r ** np.arange(K + 1)
    return h * w / w.sum()


@dataclass(frozen=True)
class MuResult:
    mu_upper: float
    kkt_residual: float
    active_constraint: str
    point: np.ndarray = field(repr=False)
    h: float = 0.0
    q: float = 0.0
    N: float = 0.0
    K: int = 0
    converged: bool = True
    tail_weight: float = 0.0


# -- KKT solve ----------------------------------------------------------------


def _entries(nu: float, rho: float, q: float, N: float, k: np.ndarray) -> np.ndarray:
    """Solve q a^(q-1) e^k + rho N a^(N-1) = nu for each k (a = 0 if infeasible)."""
    if q == 1.0:
        if rho == 0.0:
            raise SeqError("q = 1 needs an active power constraint")
        gap = np.maximum(nu - np.exp(k), 0.0)
        return (gap / (rho * N)) ** (1.0 / (N - 1.0))
    y1 = (math.log(nu / q) - k) / (q - 1.0)
    if rho == 0.0:
        return np.exp(y1)
    y2 = math.log(nu / (rho * N)) / (N - 1.0)
    # g(y) = q e^((q-1)y + k) + rho N e^((N-1)y) - nu is convex increasing in
    # y = ln a, and g >= 0 at min(y1, y2): Newton from the right is monotone.
    y = np.minimum(y1, y2)
    for _ in range(100):
        t1 = q * np.exp((q - 1.0) * y + k)
        t2 = rho * N * np.exp((N - 1.0) * y)
        step = (t1 + t2 - nu) / ((q - 1.0) * t1 + (N - 1.0) * t2)
        y = y - step
        if np.max(np.abs(step)) < 1e-15:
            break
    return np.exp(y)


def _nu_for_sum(h: float, rho: float, q: float, N: float, k: np.ndarray) -> float:
    """nu with sum_k a_k(nu, rho) = h; the sum is increasing in nu."""
    def f(t):
        return _entries(math.exp(t), rho, q, N, k).sum() - h

    lo, hi = -1.0, 1.0
    while f(hi) < 0:
        lo, hi = hi, 2.0 * hi
    while f(lo) > 0:
        hi, lo = lo, 2.0 * lo if lo < 0 else lo - 1.0
    return math.exp(optimize.brentq(f, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=200))


def _kkt_point(h: float, q: float, N: float, K: int) -> tuple[np.ndarray, float, float]:
    k = np.arange(K + 1, dtype=float)
    if q > 1.0:
        a = lagrange_point(h, q, K)
        if np.sum(a**N) <= 1.0:
            return a, _nu_for_sum(h, 0.0, q, N, k), 0.0
    elif h <= 1.0:
        # linear objective with weights e^k >= 1: all mass at k = 0 is feasible and optimal
        a = np.zeros(K + 1)
        a[0] = h
        return a, 1.0, 0.0

    # power constraint active: sum a^N decreases in rho along the sum-h curve
    def excess(t):
        rho = math.exp(t)
        return np.sum(_entries(_nu_for_sum(h, rho, q, N, k), rho, q, N, k) ** N) - 1.0

    lo, hi = -1.0, 1.0
    while excess(hi) > 0:
        lo, hi = hi, 2.0 * hi
    while excess(lo) < 0:
        hi, lo = lo, 2.0 * lo if lo < 0 else lo - 1.0
    t = optimize.brentq(excess, lo, hi, xtol=1e-14, rtol=1e-15, maxiter=300)
    rho = math.exp(t)
    nu = _nu_for_sum(h, rho, q, N, k)
    return _entries(nu, rho, q, N, k), nu, rho


def _kkt_residual(a: np.ndarray, h: float, q: float, N: float) -> float:
    """Relative first-order residual with least-squares multipliers on the support."""
    k = np.arange(a.size, dtype=float)
    grad = q * a ** (q - 1.0) * np.exp(k) if q > 1 else np.exp(k)
    g2 = N * a ** (N - 1.0)
    pN = np.sum(a**N)
    active = pN >= 1.0 - 1e-8
    supp = a > 1e-14 * h
    A = np.c_[np.ones(supp.sum()), -g2[supp]] if active else np.ones((supp.sum(), 1))
    coef, *_ = np.linalg.lstsq(A, grad[supp], rcond=None)
    if active and coef[1] < 0:
        coef[1] = 0.0
    resid = np.abs(A @ coef - grad[supp])
    scale = np.abs(grad[supp]).max()
    off = 0.0
    if np.any(~supp):
        # zero entries need grad >= nu (minus the power term, which vanishes at 0)
        off = max(0.0, float(np.max(coef[0] - grad[~supp])))
    return float(max(resid.max(initial=0.0), off) / scale)


def _descent(z0: np.ndarray, h: float, q: float, N: float, weight: float) -> np.ndarray:
    """Minimise ln ||a||_e^q + ln(1 + weight * excess^2) over a = h softmax(z)."""
    k = np.arange(z0.size, dtype=float)

    def f(z):
        a = h * softmax(z)
        lw = q * np.log(np.maximum(a, 1e-300)) + k
        L = logsumexp(lw)
        w = np.exp(lw - L)                      # d L / d ln a_k, divided by q
        pen = max(0.0, np.sum(a**N) - 1.0)
        P = math.log1p(weight * pen**2)
        dP = 2.0 * weight * pen / (1.0 + weight * pen**2) * N * a**N
        g_log_a = q * w + dP                    # gradient with respect to ln a
        grad = g_log_a - (a / h) * g_log_a.sum()
        return L + P, grad

    res = optimize.minimize(f, z0, jac=True, method="L-BFGS-B", options={"maxiter": 5000})
    return h * softmax(res.x)


def mu_estimate(h: float, q: float, N: float, K: int | None = None, starts: int = 4,
                seed: int = 0) -> MuResult:
    """Best feasible value of ||a||_e with the first-order residual at that point."""
    if not h > 0:
        raise SeqError("h must be positive")
    if q < 1 or N <= 1:
        raise SeqError("need q >= 1 and N > 1")
    K = default_truncation(h, N, q) if K is None else int(K)
    if h > (K + 1) ** ((N - 1.0) / N) + 1e-12:
        raise SeqError(f"h={h} infeasible for truncation K={K}: need h <= (K+1)^((N-1)/N)")
    candidates = []
    a, nu, rho = _kkt_point(h, q, N, K)
    a = a * (h / a.sum())
    candidates.append((0, a))
    rng = np.random.default_rng(seed)
    with np.errstate(divide="ignore"):
        z_kkt = np.log(np.maximum(a, 1e-300))
    for i in range(1, starts):
        z0 = z_kkt + rng.normal(scale=0.5, size=a.size) if i % 2 else np.log(rng.dirichlet(np.ones(K + 1)))
        b = _descent(z0, h, q, N, weight=1e6)
        candidates.append((i, b))

    best = None
    for i, b in candidates:
        if np.sum(b**N) > 1.0 + FEAS_TOL or abs(b.sum() - h) > FEAS_TOL * max(1.0, h):
            continue
        val = _log_e_norm_q(b, q) / q
        if best is None or (val, i) < (best[0], best[1]):
            best = (val, i, b)
    val, _, b = best
    pN = float(np.sum(b**N))
    resid = _kkt_residual(b, h, q, N)
    tail = b[-1] ** q * math.exp(K) if b[-1] > 0 else 0.0
    return MuResult(
        mu_upper=math.exp(val),
        kkt_residual=resid,
        active_constraint="norm_N" if pN >= 1.0 - 1e-8 else "norm_1",
        point=b,
        h=float(h), q=float(q), N=float(N), K=K,
        converged=resid <= 1e-6,
        tail_weight=tail / math.exp(q * val),
    )


def mu_asymptotic(h: float, q: float, N: float) -> float:
    """exp(h^(N/(N-1))/q) / h^(1/(N-1)) for h > 1."""
    if not h > 1:
        raise SeqError("the asymptotic form is stated for h > 1")
    return math.exp(h ** (N / (N - 1.0)) / q) / h ** (1.0 / (N - 1.0))


# -- sequence bound for radial profiles ----------------------------------------


@dataclass(frozen=True)
class Lemma32Report:
    hypotheses_ok: bool
    threshold_ok: bool
    energy_ok: bool
    u_R: float
    threshold: float
    tail_energy: float
    h: np.ndarray = field(repr=False)
    a: np.ndarray = field(repr=False)
    norm_N: float = 0.0
    telescoping_error: float = 0.0
    log_lhs: float = 0.0
    log_rhs: float = 0.0
    implied_constant: float = 0.0


def _tail_energy(u: RadialProfile, R: float) -> float:
    """N kappa int_R^inf |u'|^N r^(N-1) dr for the log-linear interpolant."""
    s, v = u.log_r, u.values
    N = u.N
    lR = math.log(R)
    if lR >= s[-1]:
        return 0.0
    knots = np.unique(np.clip(np.r_[s, lR], lR, None))
    vals = u.at_log(knots)
    vals[-1] = v[-1]
    ds = np.diff(knots)
    dv = -np.diff(vals)
    return float(N * u.gauge.constants.kappa_N * np.sum(dv**N * ds ** (1 - N)))


def lemma32_check(u: RadialProfile, R: float, K: float, g: Gauge, q: float,
                  n_terms: int | None = None) -> Lemma32Report:
    """Sequence h_k = N (kappa/K)^(1/N) u(R e^(k/N)), a_k = h_k - h_(k+1) and both sides.

    lhs = exp(lambda_N K^(1/(1-N)) u(R)^(N/(N-1))) / u(R)^(q/(N-1)) R^N,
    rhs = int_R^inf u^q r^(N-1) dr / K^(q/(N-1));  implied constant = lhs / rhs.
    """
    if u.N != g.N:
        raise SeqError("profile and gauge dimensions differ")
    N = g.N
    c = g.constants
    uR = float(u(R))
    thr = (K / c.kappa_N) ** (1.0 / N) / N
    energy = _tail_energy(u, R)
    thr_ok = uR > thr
    en_ok = energy <= K * (1.0 + 1e-12)
    if n_terms is None:
        n_terms = max(1, math.ceil(N * (u.log_r[-1] - math.log(R))) + 1)
    kk = np.arange(n_terms + 2)
    hk = N * (c.kappa_N / K) ** (1.0 / N) * u.at_log(math.log(R) + kk / N)
    a = hk[:-1] - hk[1:]
    norm_N = float(np.sum(np.abs(a) ** N) ** (1.0 / N))
    tele = abs(a.sum() - (hk[0] - hk[-1]))

    if uR > 0:
        log_lhs = (c.lambda_N * K ** (1.0 / (1.0 - N)) * uR ** (N / (N - 1.0))
                   - q / (N - 1.0) * math.log(uR) + N * math.log(R))
    else:
        log_lhs = -math.inf
    tail = RadialProfile(
        np.r_[math.log(R), u.log_r[u.log_r > math.log(R)]],
        np.r_[uR, u.values[u.log_r > math.log(R)]], g)
    with np.errstate(divide="ignore"):
        L_out, _ = tail.integrate_log(lambda x: q * np.log(x), N)
    L_in = q * math.log(uR) + N * math.log(R) - math.log(N) if uR > 0 else -math.inf
    # int_R^inf = int_0^inf(tail) - plateau part on [0, R]
    log_int = L_out + math.log(-math.expm1(L_in - L_out)) if L_out > L_in else -math.inf
    log_rhs = log_int - q / (N - 1.0) * math.log(K)
    const = math.exp(log_lhs - log_rhs) if np.isfinite(log_rhs) else math.inf
    return Lemma32Report(
        hypotheses_ok=thr_ok and en_ok,
        threshold_ok=thr_ok,
        energy_ok=en_ok,
        u_R=uR,
        threshold=thr,
        tail_energy=energy,
        h=hk,
        a=a,
        norm_N=norm_N,
        telescoping_error=tele,
        log_lhs=log_lhs,
        log_rhs=log_rhs,
        implied_constant=const,
    )


def lemma32_corpus(g: Gauge, count: int = 20, n_nodes: int = 256, seed: int = 0,
                   margin: float = 0.05) -> list[tuple[RadialProfile, float, float]]:
    """Admissible (u, R, K) triples from scaled power tails c (ln 1/r)^alpha.

    Candidates are screened on a 4096-node reference grid and kept only when
    both hypotheses hold with relative ``margin``, so the same triples stay
    admissible at any reasonable ``n_nodes``.
    """
    rng = np.random.default_rng(seed)
    N = g.N
    kappa = g.constants.kappa_N
    out = []
    while len(out) < count:
        depth = rng.uniform(4.0, 30.0)
        alpha = rng.uniform(0.4, 1.0)
        R = math.exp(-rng.uniform(0.2, 0.8) * depth)
        K = rng.uniform(0.5, 2.0)
        ref = power_tail_profile(depth, alpha, g, n_nodes=4096)
        # energy scales like c^N
        c = (K * rng.uniform(0.5, 1.0 - margin) / _tail_energy(ref, R)) ** (1.0 / N)
        thr = (K / kappa) ** (1.0 / N) / N
        if c * float(ref(R)) < (1.0 + margin) * thr:
            continue
        out.append((scale_values(power_tail_profile(depth, alpha, g, n_nodes=n_nodes), c), R, K))
    return out
