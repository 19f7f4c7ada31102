"""Wulff-radial profiles u(r), r = F0(x), and the extremal sequences built from them.

A profile is stored on nodes in ``s = ln r``.  It is constant on the plateau
``r <= r_0``, linear in ``ln r`` between nodes and zero for ``r >= R``, where
``R = r_M`` is the last node.  Storing ``ln r`` keeps the exponentially deep
plateaus of the Moser sequence representable for large ``n``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize
from scipy.special import logsumexp

from .finsler import Gauge, gauge_from_dict

__all__ = [
    "ProfileError",
    "RadialProfile",
    "moser_profile",
    "dilate",
    "scale_values",
    "solve_cn",
    "scaled_moser",
    "log_linear_profile",
    "power_tail_profile",
]

DEFAULT_NODES = 2048

_GL = {n: np.polynomial.legendre.leggauss(n) for n in (4, 8)}


class ProfileError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class RadialProfile:
    log_r: np.ndarray
    values: np.ndarray
    gauge: Gauge
    label: str = field(default="")

    def __post_init__(self):
        s = np.array(self.log_r, dtype=float).ravel()
        v = np.array(self.values, dtype=float).ravel()
        if s.size == 0 or s.shape != v.shape:
            raise ProfileError("log_r and values must be non-empty and of equal length")
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(v))):
            raise ProfileError("profile nodes must be finite")
        if np.any(np.diff(s) <= 0):
            raise ProfileError("log_r must be strictly increasing")
        if np.any(v < 0):
            raise ProfileError("profile values must be nonnegative")
        if np.any(np.diff(v) > 0):
            raise ProfileError("profile values must be nonincreasing")
        s.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "log_r", s)
        object.__setattr__(self, "values", v)

    @property
    def N(self) -> int:
        return self.gauge.N

    @property
    def support_radius(self) -> float:
        return math.exp(self.log_r[-1])

    @property
    def sup(self) -> float:
        return float(self.values[0])

    @property
    def slopes(self) -> np.ndarray:
        """du/d(ln r) on each cell (nonpositive)."""
        return np.diff(self.values) / np.diff(self.log_r)

    def at_log(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        out = np.interp(s, self.log_r, self.values, left=self.values[0])
        return np.where(s >= self.log_r[-1], 0.0, out)

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            s = np.log(r)
        return self.at_log(s)

    # -- quadrature -------------------------------------------------------

    def integrate_log(self, log_integrand: Callable[[np.ndarray], np.ndarray], weight: float,
                      max_ds: float = 0.05) -> tuple[float, float]:
        """ln of  int_0^R G(u(r)) r^(weight - 1) dr  and a relative error estimate.

        ``log_integrand`` maps values u to ln G(u) (``-inf`` where G vanishes).
        The plateau is integrated exactly; each log cell is split into panels
        of width <= ``max_ds`` in ln r and integrated by 8-point Gauss-Legendre
        in ln r, where the weight ``r^weight`` is smooth.  The error estimate is
        the gap to the 4-point rule.
        """
        if weight <= 0:
            raise ProfileError("radial weight exponent must be positive")
        s, v = self.log_r, self.values
        with np.errstate(divide="ignore"):
            plateau = float(log_integrand(np.array([v[0]]))[0]) + weight * s[0] - math.log(weight)
        if s.size == 1:
            return plateau, 0.0
        ds = np.diff(s)
        m = np.maximum(1, np.ceil(ds / max_ds - 1e-9)).astype(int)
        cell = np.repeat(np.arange(ds.size), m)
        k = np.arange(m.sum()) - np.repeat(np.cumsum(m) - m, m)
        h = ds[cell] / m[cell]
        a = s[cell] + k * h
        logs = []
        for order in (8, 4):
            x, w = _GL[order]
            nodes = a[:, None] + 0.5 * h[:, None] * (x + 1.0)
            lw = np.log(0.5 * h)[:, None] + np.log(w)
            t = (nodes - s[cell][:, None]) / ds[cell][:, None]
            u = v[cell][:, None] * (1.0 - t) + v[cell + 1][:, None] * t
            with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
                terms = log_integrand(u) + weight * nodes + lw
            logs.append(logsumexp(np.append(terms.ravel(), plateau)))
        hi, lo = logs
        if not np.isfinite(hi):
            return hi, 0.0
        rel = abs(math.expm1(lo - hi)) if np.isfinite(lo) else 1.0
        return float(hi), float(rel)

    def lq_norm(self, q: float) -> float:
        """(N kappa_N int |u|^q r^(N-1) dr)^(1/q)."""
        kappa = self.gauge.constants.kappa_N
        with np.errstate(divide="ignore"):
            L, _ = self.integrate_log(lambda u: q * np.log(u), self.N)
        if not np.isfinite(L):
            return 0.0
        return math.exp((math.log(self.N * kappa) + L) / q)

    def dirichlet_energy(self) -> float:
        """N kappa_N int |u'|^N r^(N-1) dr, exact for log-linear cells.

        On a cell linear in s = ln r, |u'(r)|^N r^(N-1) dr = |du/ds|^N ds.  A jump
        at the support radius is not counted.
        """
        return self.dirichlet_norm() ** self.N

    def dirichlet_norm(self) -> float:
        if self.log_r.size < 2:
            return 0.0
        N = self.N
        ds = np.diff(self.log_r)
        dv = -np.diff(self.values)
        m = dv.max()
        if m == 0.0:
            return 0.0
        # factor out the largest decrement so tiny profiles do not underflow
        inner = N * self.gauge.constants.kappa_N * np.sum((dv / m) ** N * ds ** (1 - N))
        return float(m * inner ** (1.0 / N))

    # -- I/O --------------------------------------------------------------

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("# gauge: " + json.dumps(self.gauge.to_dict(), sort_keys=True) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["r", "u"])
        for s, v in zip(self.log_r, self.values):
            w.writerow([_format_exp(s), repr(float(v))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, gauge: Gauge | None = None) -> "RadialProfile":
        lines = text.splitlines()
        if lines and lines[0].startswith("# gauge:"):
            if gauge is None:
                gauge = gauge_from_dict(json.loads(lines[0][len("# gauge:"):]))
            lines = lines[1:]
        if gauge is None:
            raise ProfileError("profile CSV has no gauge header and none was given")
        rows = list(csv.reader(lines))
        if rows and rows[0] == ["r", "u"]:
            rows = rows[1:]
        s = [_parse_exp(r) for r, _ in rows]
        v = [float(u) for _, u in rows]
        return cls(np.array(s), np.array(v), gauge)


def _format_exp(log_r: float) -> str:
    """Decimal scientific string for exp(log_r), exact even beyond double range."""
    l10 = log_r / math.log(10.0)
    e = math.floor(l10)
    mant = 10.0 ** (l10 - e)
    if mant >= 9.9999999999999995:
        mant, e = 1.0, e + 1
    return f"{mant:.17g}e{e:d}"


def _parse_exp(text: str) -> float:
    mant, _, e = text.lower().partition("e")
    return math.log(float(mant)) + int(e or 0) * math.log(10.0)


# -- constructors -------------------------------------------------------------


def moser_profile(n: float, N: int, beta: float, g: Gauge, n_nodes: int = DEFAULT_NODES) -> RadialProfile:
    """The extremal sequence u_n.

    Plateau (1/(N kappa))^(1/N) (n/(N-beta))^((N-1)/N) for r <= e^(-n/(N-beta)),
    ((N-beta)/(n N kappa))^(1/N) ln(1/r) up to r = 1, zero beyond.  Integer n
    reproduces the classical sequence; real n is accepted for smooth sweeps.
    """
    if N != g.N:
        raise ProfileError(f"gauge dimension {g.N} does not match N={N}")
    if not n > 0:
        raise ProfileError("n must be positive")
    if not 0 <= beta < N:
        raise ProfileError("beta must satisfy 0 <= beta < N")
    kappa = g.constants.kappa_N
    depth = n / (N - beta)
    slope = ((N - beta) / (n * N * kappa)) ** (1.0 / N)
    s = np.linspace(-depth, 0.0, n_nodes)
    v = slope * (-s)
    v[0] = (1.0 / (N * kappa)) ** (1.0 / N) * depth ** ((N - 1.0) / N)
    v[-1] = 0.0
    return RadialProfile(s, v, g, label=f"moser(n={n:g})")


def dilate(u: RadialProfile, lam: float) -> RadialProfile:
    """v(x) = u(lam x): nodes move from r to r / lam."""
    if not lam > 0:
        raise ProfileError("dilation factor must be positive")
    return RadialProfile(u.log_r - math.log(lam), u.values, u.gauge, label=u.label)


def scale_values(u: RadialProfile, c: float) -> RadialProfile:
    if not c >= 0:
        raise ProfileError("scale factor must be nonnegative")
    return RadialProfile(u.log_r, c * u.values, u.gauge, label=u.label)


def solve_cn(u_n: RadialProfile, a: float, N: int, q: float, b: float | None = None) -> float:
    """Root c of c^a ||F(grad u_n)||_N^a + c^b ||u_n||_q^b = 1 (b defaults to N).

    For the Moser sequence the gradient norm is 1 and c lies in (0, 1].
    """
    b = N if b is None else b
    e = u_n.dirichlet_norm() ** a
    m = u_n.lq_norm(q) ** b
    if e == 0.0 and m == 0.0:
        raise ProfileError("cannot normalise a zero profile")

    def f(c):
        return c**a * e + c**b * m - 1.0

    hi = 1.0
    while f(hi) < 0:
        hi *= 2.0
    return optimize.brentq(f, 0.0, hi, xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=500)


def scaled_moser(n: float, N: int, beta: float, a: float, q: float, g: Gauge,
                 n_nodes: int = DEFAULT_NODES) -> tuple[RadialProfile, float]:
    """v_n = c_n u_n with ||F(grad v_n)||^a + ||v_n||_q^N = 1."""
    u = moser_profile(n, N, beta, g, n_nodes)
    c = solve_cn(u, a, N, q)
    return scale_values(u, c), c


def log_linear_profile(depth: float, slopes, g: Gauge, radius: float = 1.0,
                       nodes_per_knot: int = 1) -> RadialProfile:
    """Piecewise-linear in ln r on [radius e^-depth, radius] with given segment weights.

    ``slopes`` (nonnegative) are the relative decrements per segment, listed
    from the outer edge inwards; equal slopes give a Moser-type profile.
    """
    w = np.asarray(slopes, dtype=float)
    if depth <= 0 or w.size == 0 or np.any(w < 0) or not np.any(w > 0):
        raise ProfileError("need depth > 0 and nonnegative, not all zero, slopes")
    m = w.size
    knots = -depth * np.arange(m + 1)[::-1] / m  # inner edge first
    inc = (w * depth / m)[::-1]                  # inner segment first
    vals = np.concatenate([np.cumsum(inc[::-1])[::-1], [0.0]])
    if nodes_per_knot > 1:
        fine = np.concatenate([np.linspace(knots[i], knots[i + 1], nodes_per_knot + 1)[:-1]
                               for i in range(m)] + [knots[-1:]])
        vals = np.interp(fine, knots, vals)
        knots = fine
    return RadialProfile(knots + math.log(radius), vals, g, label="log-linear")


def power_tail_profile(depth: float, alpha: float, g: Gauge, n_nodes: int = 256) -> RadialProfile:
    """u(r) = (ln 1/r)^alpha on [e^-depth, 1], plateau inside."""
    if depth <= 0 or alpha <= 0:
        raise ProfileError("need depth > 0 and alpha > 0")
    t = np.linspace(0.0, 1.0, n_nodes) ** 2
    s = -depth * t[::-1]
    s = np.unique(s)
    v = (-s) ** alpha
    return RadialProfile(s, v, g, label=f"power(alpha={alpha:g})")
