import numpy as np
import pytest
from numpy.testing import assert_allclose

from wasep.adjoint import (
    adjoint_one,
    compute_coefficients,
    eval_degree1,
    k_field_general,
    k_field_perturbation,
    log_reference_density,
    make_semidiscrete_rhs,
    psi_time_derivative_field,
    residual_field,
    semidiscrete_rhs,
)
from wasep.exact import adjoint_apply_one, build_generator, config_index
from wasep.lattice import Torus, all_configurations
from wasep.measures import DensityProfile
from wasep.pde import semidiscrete_solve, ssep_closed_form_rhs
from wasep.rates import beta_environment, ssep
from wasep.scaling import ScalingPlan


def cosine_profile(torus, amplitude=0.1):
    x = np.arange(torus.n)
    return DensityProfile(torus, 0.5 + amplitude * np.cos(2 * np.pi * x / torus.n))


def test_coefficient_values_at_half():
    torus = Torus(1, 6)
    prof = DensityProfile.constant(torus, 0.5)
    scaling = ScalingPlan(d=1, n=6, a_n=2.0)
    coeffs = compute_coefficients(ssep(1), prof, scaling)
    assert_allclose(coeffs.A[0], 8.0)  # (1/4 + 1/4) / (1/16)
    assert_allclose(coeffs.C[0], 0.25)  # m rho (1 - rho)


def test_symmetric_families_vanish_on_constant_profile():
    torus = Torus(1, 5)
    prof = DensityProfile.constant(torus, 0.37)
    scaling = ScalingPlan(d=1, n=5, a_n=2.0)
    coeffs = compute_coefficients(beta_environment(0.2), prof, scaling)
    for family in (coeffs.E1, coeffs.F1, coeffs.G1, coeffs.B1[0][0], coeffs.B1[0][1]):
        assert_allclose(family, 0.0, atol=1e-15)
    # the asymmetric mean-zero sums vanish too: constant A and C
    assert_allclose(coeffs.B2[0][0], 0.0, atol=1e-15)


def test_adjoint_vanishes_for_constant_profile():
    torus = Torus(1, 5)
    scaling = ScalingPlan(d=1, n=5, a_n=np.sqrt(5.0))
    for spec in (ssep(1), beta_environment(0.2)):
        for alpha in (0.3, 0.5):
            prof = DensityProfile.constant(torus, alpha)
            expansion = adjoint_one(spec, prof, scaling, parts="both")
            for config in all_configurations(torus):
                assert abs(expansion.evaluate(config)) <= 1e-12


def test_adjoint_matches_matrix_oracle_small():
    torus = Torus(1, 4)
    scaling = ScalingPlan(d=1, n=4, a_n=2.0)
    prof = cosine_profile(torus)
    for spec in (ssep(1), beta_environment(0.2)):
        for parts in ("S", "T", "both"):
            expansion = adjoint_one(spec, prof, scaling, parts=parts)
            gen = build_generator(spec, torus, scaling, parts=parts)
            oracle = adjoint_apply_one(gen, prof)
            for config in all_configurations(torus):
                assert expansion.evaluate(config) == pytest.approx(
                    oracle[config_index(config)], abs=1e-10
                )


def test_adjoint_matches_matrix_oracle_d2():
    torus = Torus(2, 3)
    scaling = ScalingPlan(d=2, n=3, a_n=1.5)
    rng = np.random.default_rng(12)
    prof = DensityProfile(torus, rng.uniform(0.35, 0.65, torus.size))
    spec = ssep(2, drift=(1.0, -0.5))
    expansion = adjoint_one(spec, prof, scaling, parts="both")
    gen = build_generator(spec, torus, scaling, parts="both")
    oracle = adjoint_apply_one(gen, prof)
    rng2 = np.random.default_rng(3)
    for _ in range(25):
        config = (rng2.random(torus.size) < 0.5).astype(np.uint8)
        assert expansion.evaluate(config) == pytest.approx(oracle[config_index(config)], abs=1e-9)


def test_h_tables_stay_inside_support_box():
    torus = Torus(1, 12)
    prof = cosine_profile(torus)
    scaling = ScalingPlan(d=1, n=12, a_n=2.0)
    expansion = adjoint_one(beta_environment(0.2), prof, scaling)
    # support box of rate/decomposition offsets plus the bond pair
    assert expansion.max_subset_radius() <= 12 - 1  # wrapped offsets are sites
    for tables in expansion.h_tables:
        for A in tables:
            assert len(A) >= 2
            for s in A:
                assert s in {(11,), (0,), (1,), (2,)}


def test_degree1_routes_agree():
    n = 16
    torus = Torus(1, n)
    scaling = ScalingPlan(d=1, n=n, a_n=4.0)
    v = 0.8 * np.cos(2 * np.pi * np.arange(n) / n)
    prof = DensityProfile(torus, 0.5 + scaling.epsilon * v)
    for spec in (ssep(1), beta_environment(0.2)):
        general = k_field_general(spec, prof, scaling)
        perturbed = k_field_perturbation(spec, torus, scaling, v, alpha0=0.5)
        assert np.max(np.abs(general - perturbed)) <= 1e-9


def test_psi_derivative_matches_log_density_differences():
    n = 5
    torus = Torus(1, n)
    alpha = 0.5

    def w_of(t):
        return 0.5 + 0.1 * np.cos(2 * np.pi * (np.arange(n) / n) + t)

    t0 = 0.3
    field = psi_time_derivative_field(w_of, t0, h=1e-6)
    prof = DensityProfile(torus, w_of(t0))
    h = 1e-5
    for config in all_configurations(torus):
        fd = (
            log_reference_density(DensityProfile(torus, w_of(t0 + h)), alpha, config)
            - log_reference_density(DensityProfile(torus, w_of(t0 - h)), alpha, config)
        ) / (2 * h)
        assert eval_degree1(field, prof, config) == pytest.approx(fd, abs=1e-8)


def test_psi_derivative_constant_path_is_zero():
    field = psi_time_derivative_field(lambda t: np.full(4, 0.4), 1.0)
    assert_allclose(field, 0.0, atol=1e-12)


def test_semidiscrete_rhs_constant_perturbation():
    n = 12
    scaling = ScalingPlan(d=1, n=n, a_n=3.0)
    for spec in (ssep(1), beta_environment(0.2)):
        out = semidiscrete_rhs(spec, np.full(n, 0.7), scaling)
        assert_allclose(out, 0.0, atol=1e-9)
        out0 = semidiscrete_rhs(spec, np.zeros(n), scaling)
        assert_allclose(out0, 0.0, atol=1e-12)


def test_semidiscrete_rhs_matches_closed_form():
    n = 64
    torus = Torus(1, n)
    scaling = ScalingPlan(d=1, n=n, a_n=8.0)
    spec = ssep(1)
    v = 0.6 * np.cos(2 * np.pi * np.arange(n) / n) + 0.2 * np.sin(6 * np.pi * np.arange(n) / n)
    fast = make_semidiscrete_rhs(spec, scaling)(v)
    closed = ssep_closed_form_rhs(torus, scaling, spec.drift)(v)
    slow = semidiscrete_rhs(spec, v, scaling)
    assert np.max(np.abs(fast - closed)) <= 1e-10
    assert np.max(np.abs(slow - fast)) <= 1e-12


def test_degree1_cancellation_along_semidiscrete_flow():
    # integrate the lattice flow, then recompute the degree-1 field of the
    # expansion minus the reference-density drift: it must vanish
    n = 8
    torus = Torus(1, n)
    scaling = ScalingPlan(d=1, n=n, a_n=2.0)
    spec = ssep(1)
    v0 = np.cos(2 * np.pi * np.arange(n) / n)
    t = 0.03
    traj = semidiscrete_solve(spec, v0, scaling, t_end=t, snapshot_times=[t])
    v_t = traj.at(t)
    prof = DensityProfile(torus, 0.5 + scaling.epsilon * v_t)
    expansion = adjoint_one(spec, prof, scaling, parts="both")
    wdot = scaling.epsilon * semidiscrete_rhs(spec, v_t, scaling)
    gap = expansion.degree1() - wdot
    assert np.max(np.abs(gap)) <= 1e-8


def test_residual_constant_initial_profile():
    n = 32
    scaling = ScalingPlan.from_epsilon_rule(1, n, "n_pow:-0.5")
    ln, report = residual_field(
        ssep(1), scaling, v_lattice=np.full(n, 0.4), dvdt_lattice=np.zeros(n), t=0.0
    )
    assert report.max_residual <= 1e-10
    assert report.bound == pytest.approx(scaling.epsilon**2 + 1.0 / n)
