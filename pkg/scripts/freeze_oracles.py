"""Compute reference values by independent routes and freeze them to tests/data/oracles.json.

Nothing here imports the package's numerical code: volumes come from Gamma
functions and high-precision polar quadrature (mpmath), series and radial
integrals from mpmath, and mu(h) from a conic solver (cvxpy).
"""

from __future__ import annotations

import json
import math
from fractions import Fraction
from pathlib import Path

import cvxpy as cp
import mpmath as mp
import numpy as np

mp.mp.dps = 40
OUT = Path(__file__).resolve().parents[1] / "tests" / "data" / "oracles.json"


def pnorm_ball_volume(N: int, p: float) -> float:
    """|{||x||_p <= 1}| = (2 Gamma(1 + 1/p))^N / Gamma(1 + N/p)."""
    if math.isinf(p):
        return 2.0**N
    return float((2 * mp.gamma(1 + mp.mpf(1) / p)) ** N / mp.gamma(1 + mp.mpf(N) / p))


def polar_area_2d(polar) -> float:
    """Area of {polar <= 1} as (1/2) int r(t)^2 dt with r(t) = 1 / polar(cos t, sin t)."""
    f = lambda t: 0.5 / polar(mp.cos(t), mp.sin(t)) ** 2
    return float(mp.quad(f, mp.linspace(0, 2 * mp.pi, 9)))


def volumes() -> dict:
    out = {}
    for p in (2.0, 4.0, 32.0, math.inf):
        dual = 1.0 if math.isinf(p) else p / (p - 1.0)
        for N in (2, 3):
            out[f"pnorm_p{p:g}_N{N}"] = pnorm_ball_volume(N, dual)
        # second route in the plane
        q = mp.mpf(dual)
        out[f"pnorm_p{p:g}_N2_quad"] = polar_area_2d(lambda x, y: (abs(x) ** q + abs(y) ** q) ** (1 / q))
    out["ellipse_diag41"] = polar_area_2d(lambda x, y: mp.sqrt(x**2 / 4 + y**2))
    out["ellipse_diag41_semi_axes"] = math.pi * 2.0 * 1.0
    out["ellipse_diag21"] = polar_area_2d(lambda x, y: mp.sqrt(x**2 / 2 + y**2))
    out["ellipsoid_diag1.5_1_1"] = float(4 / mp.mpf(3) * mp.pi * mp.sqrt(1.5))
    return out


def phi(t, j0):
    t = mp.mpf(t)
    return mp.exp(t) - mp.fsum(t**j / mp.factorial(j) for j in range(j0))


def start_index(N, q, beta) -> int:
    """Smallest j with j >= theta (beta = 0) or j > theta (beta > 0), in exact rationals."""
    N, q, beta = Fraction(N), Fraction(q), Fraction(beta)
    theta = q * (N - 1) / N * (1 - beta / N)
    j = math.floor(theta)
    if beta == 0:
        return j if j == theta else j + 1
    return j + 1


def phi_values() -> list:
    rows = []
    for N, q, beta in ((2, 2, 0), (2, 4, 0), (3, 2, 0), (2, 2, 1), (2, 3, 1), (3, 3, "3/2"), (4, 2, 0)):
        j0 = start_index(N, q, beta)
        beta = float(Fraction(beta))
        for t in ("1e-6", "0.01", "0.5", "1", "2.5", "10", "60", "400"):
            rows.append({"N": N, "q": q, "beta": beta, "j0": j0, "t": float(t),
                         "phi": float(phi(t, j0)), "log_phi": float(mp.log(phi(t, j0)))})
    return rows


def moser_integral(n, N, beta, kappa, q, lam, p=None, d=1.0, k=None, variant="PHI"):
    """N kappa int_0^1 G(u_n(r)) r^(N-1-beta) dr for the analytic u_n, in log form."""
    n, N, beta, kappa = mp.mpf(n), mp.mpf(N), mp.mpf(beta), mp.mpf(kappa)
    damp = 1 - beta / N
    theta = q * (N - 1) / N * damp
    j0 = int(mp.ceil(theta - mp.mpf("1e-12"))) if beta == 0 else int(mp.floor(theta + mp.mpf("1e-12"))) + 1
    depth = n / (N - beta)
    slope = ((N - beta) / (n * N * kappa)) ** (1 / N)
    plateau = (1 / (N * kappa)) ** (1 / N) * depth ** ((N - 1) / N)
    c = lam * damp

    def G(u):
        if u == 0:
            return mp.mpf(0)
        val = phi(c * u ** (N / (N - 1)), j0)
        if variant == "PHI":
            return val
        growth = p / (N - 1) * damp
        if variant == "PHI_EXACT_GROWTH_K":
            growth *= 1 - mp.mpf(1) / k
        return val / (1 + d * u**growth)

    w = N - beta
    inner = G(plateau) * mp.exp(-w * depth) / w
    outer = mp.quad(lambda s: G(slope * (-s)) * mp.exp(w * s), mp.linspace(-depth, 0, 17))
    return float(mp.log(N * kappa * (inner + outer)))


def moser_lq(n, N, beta, kappa, q):
    n, N, beta, kappa = mp.mpf(n), mp.mpf(N), mp.mpf(beta), mp.mpf(kappa)
    depth = n / (N - beta)
    slope = ((N - beta) / (n * N * kappa)) ** (1 / N)
    plateau = (1 / (N * kappa)) ** (1 / N) * depth ** ((N - 1) / N)
    inner = plateau**q * mp.exp(-N * depth) / N
    outer = mp.quad(lambda s: (slope * (-s)) ** q * mp.exp(N * s), mp.linspace(-depth, 0, 9))
    return float((N * kappa * (inner + outer)) ** (1 / mp.mpf(q)))


def integrals() -> list:
    pi = float(mp.pi)
    lamN2 = 4 * pi
    cases = [
        dict(n=8, N=2, beta=0, kappa=pi, q=2, lam=0.5 * lamN2, variant="PHI"),
        dict(n=16, N=2, beta=1, kappa=pi, q=3, lam=0.9 * lamN2, variant="PHI"),
        dict(n=32, N=2, beta=0.5, kappa=2.0, q=2, lam=0.7 * 8.0, variant="PHI"),
        dict(n=12, N=2, beta=0, kappa=pi, q=2, lam=lamN2, p=1.0, variant="PHI_EXACT_GROWTH"),
        dict(n=12, N=2, beta=1, kappa=pi, q=2, lam=lamN2, p=2.0, k=3.0, d=0.5,
             variant="PHI_EXACT_GROWTH_K"),
        dict(n=10, N=3, beta=1, kappa=4 * pi / 3, q=3, lam=0.8 * 3**1.5 * (4 * pi / 3) ** 0.5,
             variant="PHI"),
    ]
    out = []
    for c in cases:
        out.append({**c, "log_integral": moser_integral(**c)})
    return out


def lq_norms() -> list:
    pi = float(mp.pi)
    return [{"n": n, "N": N, "beta": beta, "kappa": kappa, "q": q,
             "lq": moser_lq(n, N, beta, kappa, q)}
            for n, N, beta, kappa, q in ((4, 2, 0, pi, 2), (16, 2, 1, pi, 3), (64, 2, 0, 2.0, 1),
                                         (8, 3, 0, 4 * pi / 3, 3))]


def mu_values() -> list:
    """mu(h) = min ||a||_e subject to sum a = h, ||a||_N <= 1, a >= 0 (conic solve)."""
    rows = []
    for q, N, h in ((2, 2, 1.0), (2, 2, 2.0), (2, 2, 3.0), (2, 2, 4.0), (1, 2, 2.0), (1, 2, 3.0),
                    (2, 3, 2.0), (3, 3, 2.5)):
        # q = 1 is a linear objective whose weights span e^K: keep K small
        K = 24 if q == 1 else max(64, math.ceil(4 * h ** (N / (N - 1))))
        k = np.arange(K + 1)
        a = cp.Variable(K + 1, nonneg=True)
        # shift the exponent so the optimal objective is O(1)
        shift = float(min(K, h ** (N / (N - 1))))
        w = np.exp((k - shift) / q)
        obj = cp.norm(cp.multiply(w, a), q) if q > 1 else cp.sum(cp.multiply(np.exp(k - shift), a))
        prob = cp.Problem(cp.Minimize(obj), [cp.sum(a) == h, cp.norm(a, N) <= 1])
        prob.solve(solver=cp.CLARABEL)
        val = float(prob.value) * math.exp(shift / q)
        rows.append({"q": q, "N": N, "h": h, "K": K, "mu": val, "status": prob.status})
    return rows


def main():
    data = {
        "volumes": volumes(),
        "phi": phi_values(),
        "moser_integrals": integrals(),
        "moser_lq": lq_norms(),
        "mu": mu_values(),
        "mu_h1_closed_form": float(mp.sqrt(1 - mp.e ** -1)),
        "seq_norms_example": [2.0, math.sqrt(2.0), float(mp.sqrt(1 + mp.e))],
        "moser_plateau_n2": float(mp.sqrt(1 / (2 * mp.pi))),
    }
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(data, indent=1, sort_keys=True) + "\n")
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
