"""Simulation and verification suite for weakly asymmetric speed-change
exclusion processes on the discrete torus, cross-checked at desk scale
against brute-force oracles and the limiting viscous Burgers flow."""

from .lattice import Configuration, LocalFunction, Torus, eval_local, swap, translate
from .measures import DensityProfile, chi, expect_local, product_relative_entropy, sample_product, tilde_eval, tilde_poly
from .rates import RateSpec, beta_environment, preset, ssep, validate_rate_spec
from .scaling import ScalingPlan, scaling_check

__version__ = "0.1.0"

__all__ = [
    "Configuration",
    "DensityProfile",
    "LocalFunction",
    "RateSpec",
    "ScalingPlan",
    "Torus",
    "beta_environment",
    "chi",
    "eval_local",
    "expect_local",
    "preset",
    "product_relative_entropy",
    "sample_product",
    "scaling_check",
    "ssep",
    "swap",
    "tilde_eval",
    "tilde_poly",
    "translate",
    "__version__",
]
