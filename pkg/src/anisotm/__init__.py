"""Numerical companion for anisotropic singular Trudinger-Moser inequalities."""

from .finsler import (
    EllipsoidGauge,
    Gauge,
    GaugeConstants,
    PNormGauge,
    SampledGauge,
    euclidean,
    gauge_from_dict,
)
from .functionals import Constraint, FunctionalValue, TMParams, Theorem, Variant, ratio, tm_integral
from .profiles import RadialProfile, dilate, moser_profile, scale_values, scaled_moser, solve_cn
from .rearrange import SampledFunction, convex_symmetrization, decreasing_rearrangement
from .seqopt import lemma32_check, mu_asymptotic, mu_estimate
from .supsearch import (
    atmc_identity_check,
    estimate_atmc,
    estimate_atmsc,
    sharpness_sweep,
)

__version__ = "0.1.0"

__all__ = [
    "Constraint",
    "EllipsoidGauge",
    "FunctionalValue",
    "Gauge",
    "GaugeConstants",
    "PNormGauge",
    "RadialProfile",
    "SampledFunction",
    "SampledGauge",
    "TMParams",
    "Theorem",
    "Variant",
    "atmc_identity_check",
    "convex_symmetrization",
    "decreasing_rearrangement",
    "dilate",
    "estimate_atmc",
    "estimate_atmsc",
    "euclidean",
    "gauge_from_dict",
    "lemma32_check",
    "moser_profile",
    "mu_asymptotic",
    "mu_estimate",
    "ratio",
    "scale_values",
    "scaled_moser",
    "sharpness_sweep",
    "solve_cn",
    "tm_integral",
]
