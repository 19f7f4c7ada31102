import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anisotm.finsler import EllipsoidGauge, PNormGauge, euclidean
from anisotm.functionals import Constraint, TMParams, Theorem, Variant, constraint_check, ratio, tm_integral
from anisotm.profiles import log_linear_profile, scale_values, solve_cn
from anisotm.supsearch import (
    _allocate,
    _normalize_gradient,
    atmc_bracket,
    atmc_identity_check,
    atmc_moser_trend,
    equivalence_check,
    estimate_atmc,
    estimate_atmsc,
    family_by_name,
    fit_growth,
    gauge_covariance_check,
    knots_family,
    moser_family,
    pattern_search,
    power_family,
    predicted_exponent,
    sharpness_sweep,
)

E2 = euclidean(2)
L4 = PNormGauge(2, 4.0)


def _atmsc_value(est, family, params, g):
    u = _normalize_gradient(family.realize(np.array(est.argmax), g, params.beta))
    return ratio(u, params, g, Theorem.ATMSC, check=False).log_value


@pytest.mark.parametrize("family", [moser_family(), knots_family(4), power_family()],
                         ids=["moser", "knots4", "power"])
def test_atmsc_reevaluation(family):
    g = L4
    lam = 0.7 * g.constants.lambda_N
    est = estimate_atmsc(2, 2.0, lam, 0.5, g, family, budget=80, seed=3)
    params = TMParams(N=2, q=2.0, beta=0.5, lam=lam)
    lv = _atmsc_value(est, family, params, g)
    assert abs(lv - est.log_value) <= 1e-8 * abs(est.log_value)
    assert est.value == pytest.approx(math.exp(lv), rel=1e-8)
    assert est.evaluations <= 80


def test_atmc_reevaluation():
    g = L4
    family = knots_family(3)
    est = estimate_atmc(2, 2.0, 0.0, 1.5, 2.0, g, family, budget=80, seed=1)
    x = np.array(est.argmax)
    t = 1 / (1 + math.exp(-x[-1]))
    params = TMParams(N=2, q=2.0, beta=0.0, lam=g.constants.lambda_N, a=1.5, b=2.0)
    u = _allocate(family.realize(x[:-1], g, 0.0), t, 1.5, 2.0, 2.0)
    res = constraint_check(u, params, g, Constraint.SUM_AB)
    assert abs(res.slack) <= 1e-9
    lv = tm_integral(u, params, g, Variant.PHI).log_value
    assert abs(lv - est.log_value) <= 1e-8 * abs(est.log_value)


@pytest.mark.parametrize("family", ["moser", "knots4", "power"])
def test_budget_monotone(family):
    fam = family_by_name(family)
    vals = [estimate_atmsc(2, 2.0, 0.8 * E2.constants.lambda_N, 0.0, E2, fam, budget=b, seed=2).log_value
            for b in (20, 40, 80, 160)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_atmsc_vanishes_as_lambda_goes_to_zero():
    L = L4.constants.lambda_N
    vals = [estimate_atmsc(2, 2.0, x * L, 0.0, L4, budget=60).value for x in (1e-6, 1e-4, 1e-2)]
    assert vals[0] < vals[1] < vals[2]
    # Phi(t) ~ t near zero, so the estimate is linear in lambda there
    assert vals[0] / vals[1] == pytest.approx(1e-2, rel=0.05)


def test_atmsc_nondecreasing_in_lambda():
    L = E2.constants.lambda_N
    vals = [estimate_atmsc(2, 2.0, x * L, 0.0, E2, budget=100).value for x in (0.1, 0.3, 0.5, 0.7, 0.9)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_atmsc_rejects_critical_lambda():
    with pytest.raises(ValueError):
        estimate_atmsc(2, 2.0, E2.constants.lambda_N, 0.0, E2)


def test_classical_specialization_is_finite():
    est = estimate_atmc(2, 2.0, 0.0, 2.0, 2.0, E2, budget=200)
    assert math.isfinite(est.value) and est.value > 0 and not est.saturated


def test_bracket_endpoints():
    small = [atmc_bracket(x, 2, 2.0, 0.0, 2.0, 2.0) for x in (1e-2, 1e-4, 1e-6)]
    assert small[0] < small[1] < small[2]
    assert atmc_bracket(1.0 - 1e-12, 2, 2.0, 0.0, 2.0, 2.0) < 1e-6


def test_identity_rhs_grows_with_grid():
    coarse = atmc_identity_check(2, 2.0, 0.0, 2.0, 2.0, [0.2, 0.5], L4, budget=40)
    fine = atmc_identity_check(2, 2.0, 0.0, 2.0, 2.0, [0.1, 0.2, 0.35, 0.5, 0.8], L4, budget=40)
    assert fine["rhs"] >= coarse["rhs"]
    with pytest.raises(ValueError):
        atmc_identity_check(2, 2.0, 0.0, 2.0, 3.0, [0.5], L4)


def test_moser_trend_flat_for_b_equal_N():
    pts = atmc_moser_trend(2, 2.0, 0.0, 2.0, 2.0, E2, [16, 64, 256])
    vals = [v for _, v in pts]
    assert max(vals) - min(vals) < 0.05
    assert vals[-1] <= math.log(E2.constants.lambda_N) + 1e-6


def test_pattern_search_on_quadratic():
    target = np.array([0.3, -1.2])
    f = lambda x: -float(np.sum((x - target) ** 2))
    best, x, used, _ = pattern_search(f, (-2.0, -2.0), (2.0, 2.0), (0.0, 0.0), budget=400, seed=0)
    assert np.allclose(x, target, atol=1e-3)
    assert used <= 400


@settings(max_examples=15)
@given(st.integers(0, 10_000), st.integers(5, 60))
def test_pattern_search_prefix_property(seed, budget):
    # a larger budget extends the same run, so it can never end worse
    f = lambda x: -float(np.sum(np.sin(3 * x) + x**2))
    a = pattern_search(f, (-2.0, -2.0), (2.0, 2.0), (1.0, 1.0), budget=budget, seed=seed)[0]
    b = pattern_search(f, (-2.0, -2.0), (2.0, 2.0), (1.0, 1.0), budget=2 * budget, seed=seed)[0]
    assert b >= a


# -- sweeps ---------------------------------------------------------------------


def test_fit_growth_exact_line():
    x = np.arange(10.0)
    slope, r2 = fit_growth(x, 3 * x + 1)
    assert slope == pytest.approx(3.0) and r2 == pytest.approx(1.0)


def test_predicted_exponent_modes():
    g = E2
    L = g.constants.lambda_N
    assert predicted_exponent("T11", TMParams(N=2, q=2.0, beta=0.0, lam=1.2 * L), g) == ("linear", "ratio",
                                                                                       pytest.approx(0.2))
    assert predicted_exponent("T11", TMParams(N=2, q=2.0, beta=0.0, lam=0.5 * L), g)[0:2] == ("loglog", "ratio")
    mode, tgt, e = predicted_exponent("T11", TMParams(N=2, q=2.0, beta=0.0, lam=L, p=3.0), g)
    assert (mode, tgt, e) == ("loglog", "integral", pytest.approx(1.5))
    _, _, e = predicted_exponent("T14", TMParams(N=2, q=2.0, beta=1.0, lam=L, p=1.0), g)
    assert e == pytest.approx(0.25)


@pytest.mark.parametrize("theorem", ["T14", "T15", "T16"])
def test_supercritical_rate(theorem):
    g = L4
    params = TMParams.from_ratio(g, 1.2, q=2.0, beta=0.0, p=2.0, k=2.0, a=2.0)
    rep = sharpness_sweep(theorem, params, g, list(range(8, 65, 8)))
    assert rep.fit == "linear"
    assert rep.fitted_exponent == pytest.approx(0.2, rel=0.1)
    assert rep.divergent


def test_subcritical_not_divergent():
    params = TMParams.from_ratio(E2, 0.5, q=2.0, beta=0.0)
    rep = sharpness_sweep("T11", params, E2, [64 * 2**i for i in range(9)])
    assert not rep.divergent and abs(rep.fitted_exponent) < 0.05


def test_sweep_report_serializes():
    params = TMParams.from_ratio(E2, 1.0, q=2.0, beta=0.0, p=2.0)
    rep = sharpness_sweep("T11", params, E2, [4, 8, 16, 32, 64])
    d = json.loads(json.dumps(rep.to_dict()))
    assert {"theorem", "params", "sequence", "fitted_exponent", "predicted_exponent",
            "r_squared", "points"} <= set(d)
    assert len(d["points"]) == 5 and d["sequence"] == "u_n"
    with pytest.raises(ValueError):
        sharpness_sweep("T11", params, E2, [8, 4])


def test_t15_sequence_satisfies_its_constraint():
    g = L4
    params = TMParams.from_ratio(g, 1.0, q=2.0, beta=0.5, p=1.0, k=3.0, a=1.5)
    # ratio() raises ConstraintViolation if any dilated profile misses the kN constraint
    rep = sharpness_sweep("T15", params, g, [4, 8, 16, 32])
    assert rep.sequence == "dilated c_n u_n"


# -- structural checks ----------------------------------------------------------


@pytest.mark.parametrize("g", [L4, EllipsoidGauge(np.diag([2.0, 1.0])), PNormGauge(3, 4.0)],
                         ids=["l4", "ellipse", "l4_N3"])
def test_gauge_covariance_on_argmax(g):
    params = TMParams.from_ratio(g, 0.6, q=2.0, beta=1.0)
    fam = knots_family(4)
    est = estimate_atmsc(g.N, 2.0, params.lam, 1.0, g, fam, budget=40)
    u = _normalize_gradient(fam.realize(np.array(est.argmax), g, 1.0))
    rep = gauge_covariance_check(u, params)
    assert rep["energy_reldiff"] <= 1e-4
    assert rep["integral_reldiff"] <= 1e-4
    assert rep["norm_reldiff"] <= 1e-4


def test_euclidean_gauge_covariance_is_trivial():
    params = TMParams.from_ratio(E2, 0.6, q=2.0, beta=1.0)
    u = _normalize_gradient(log_linear_profile(5.0, [1, 2, 3], E2))
    rep = gauge_covariance_check(u, params)
    assert rep["gamma"] == 1.0
    assert max(rep["energy_reldiff"], rep["integral_reldiff"], rep["norm_reldiff"]) <= 1e-14


@given(st.floats(1.0, 30.0), st.lists(st.floats(0.0, 2.0), min_size=2, max_size=5).filter(lambda w: sum(w) > 0.1),
       st.floats(1.2, 4.0), st.floats(0.0, 1.5))
@settings(max_examples=25)
def test_equivalence_property(depth, weights, k, beta):
    g = L4
    params = TMParams.from_ratio(g, 1.0, q=2.0, beta=beta, p=1.0, k=k, a=1.5)
    u = log_linear_profile(depth, weights, g)
    # rescale onto the b = N constraint
    v = scale_values(u, solve_cn(u, params.a, 2, params.q))
    rep = equivalence_check(v, params, g)
    assert abs(rep["constraint_v"] - 1.0) <= 1e-9
    assert abs(rep["constraint_u"] - 1.0) <= 1e-9
    assert rep["norm_identity"] <= 1e-10
    assert rep["integral_identity"] <= 1e-6
    assert rep["ratio_identity"] <= 1e-6
