import itertools

import numpy as np
import pytest
from numpy.testing import assert_allclose

from wasep.fourier import (
    expansion_order_check,
    fourier_coefficients,
    inhomogeneous_expansion,
    omega,
    project,
    project_plus,
    reconstruct,
    tilde_derivative_via_fourier,
    xi,
)
from wasep.lattice import LocalFunction, Torus, all_configurations
from wasep.measures import DensityProfile, chi, expect_local, tilde_eval, tilde_poly
from wasep.profiles import make_field


def eta(*offset):
    return LocalFunction.occupancy(offset)


def brute_expectation(fn, profile):
    """Sum over all configurations weighted by the product measure."""
    torus = profile.torus
    total = 0.0
    for config in all_configurations(torus):
        weight = 1.0
        for i in range(torus.size):
            p = profile.values[i]
            weight *= p if config[i] else 1.0 - p
        total += weight * fn(config)
    return total


@pytest.fixture
def small_profile():
    torus = Torus(1, 3)
    return DensityProfile(torus, np.array([0.3, 0.55, 0.7]))


def test_omega_mean_zero_and_variance(small_profile):
    prof = small_profile
    for s in prof.torus.sites():
        mean = brute_expectation(lambda cfg: omega(prof, cfg, [s]), prof)
        second = brute_expectation(lambda cfg: omega(prof, cfg, [s]) ** 2, prof)
        assert mean == pytest.approx(0.0, abs=1e-14)
        assert second == pytest.approx(1.0 / chi(prof.density_at(s)), rel=1e-12)


def test_omega_orthogonality_exhaustive(small_profile):
    prof = small_profile
    sites = list(prof.torus.sites())
    subsets = []
    for r in range(len(sites) + 1):
        subsets.extend(itertools.combinations(sites, r))
    for a in subsets:
        for b in subsets:
            val = brute_expectation(lambda cfg: omega(prof, cfg, a) * omega(prof, cfg, b), prof)
            if set(a) == set(b):
                expected = 1.0
                for s in a:
                    expected /= chi(prof.density_at(s))
                assert val == pytest.approx(expected, rel=1e-12)
            else:
                assert val == pytest.approx(0.0, abs=1e-12)


def test_xi_omega_empty_set(small_profile):
    config = np.array([1, 0, 1], dtype=np.uint8)
    assert xi(small_profile, config, []) == 1.0
    assert omega(small_profile, config, []) == 1.0


def test_coefficients_single_occupancy():
    torus = Torus(1, 5)
    rho = 0.42
    prof = DensityProfile.constant(torus, rho)
    table = fourier_coefficients(eta(0), prof, (2,))
    assert table.coefficient(()) == pytest.approx(rho)
    assert table.coefficient([(0,)]) == pytest.approx(chi(rho))


def test_coefficients_pair_product():
    torus = Torus(1, 6)
    rho = 0.31
    prof = DensityProfile.constant(torus, rho)
    table = fourier_coefficients(eta(0) * eta(1), prof, (0,))
    assert table.coefficient(()) == pytest.approx(rho**2)
    assert table.coefficient([(0,)]) == pytest.approx(rho * chi(rho))
    assert table.coefficient([(1,)]) == pytest.approx(rho * chi(rho))
    assert table.coefficient([(0,), (1,)]) == pytest.approx(chi(rho) ** 2)


def test_coefficients_vanish_outside_support():
    torus = Torus(1, 6)
    prof = DensityProfile.constant(torus, 0.5)
    table = fourier_coefficients(eta(0) * eta(1), prof, (0,))
    assert table.coefficient([(3,)]) == 0.0
    assert table.coefficient([(0,), (3,)]) == 0.0


def test_reconstruction_is_exact():
    torus = Torus(1, 4)
    rng = np.random.default_rng(8)
    prof = DensityProfile(torus, rng.uniform(0.15, 0.85, 4))
    f = LocalFunction(1, ((-1,), (0,), (1,)), rng.normal(size=8))
    for x in torus.sites():
        table = fourier_coefficients(f, prof, x)
        placed = f.place(torus)
        for config in all_configurations(torus):
            assert reconstruct(table, config) == pytest.approx(placed.eval(config, x), abs=1e-12)


def test_projections_partition_function():
    torus = Torus(1, 4)
    rng = np.random.default_rng(9)
    prof = DensityProfile(torus, rng.uniform(0.2, 0.8, 4))
    f = LocalFunction(1, ((0,), (1,)), rng.normal(size=4))
    placed = f.place(torus)
    x = (1,)
    p0 = project(f, prof, x, 0)
    for config in all_configurations(torus):
        total = sum(project(f, prof, x, q).eval(config) for q in range(3))
        assert total == pytest.approx(placed.eval(config, x), abs=1e-12)
        assert p0.eval(config) == pytest.approx(expect_local(f, prof, x), abs=1e-13)
        centered = project_plus(f, prof, x, 1).eval(config)
        assert centered == pytest.approx(placed.eval(config, x) - expect_local(f, prof, x), abs=1e-12)


def test_coefficient_csv_dump(tmp_path):
    torus = Torus(1, 5)
    prof = DensityProfile.constant(torus, 0.5)
    table = fourier_coefficients(eta(0) * eta(1), prof, (0,))
    path = tmp_path / "table.csv"
    table.dump_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "subset_bitmask,coefficient"
    assert len(lines) == 1 + 4  # all subsets of a two-site support


def test_derivative_identity_simple_cases():
    for theta in (0.2, 0.5, 0.9):
        assert tilde_derivative_via_fourier(eta(0), theta) == pytest.approx(1.0, abs=1e-12)
        assert tilde_derivative_via_fourier(eta(0) * eta(1), theta) == pytest.approx(2 * theta, abs=1e-12)


def test_derivative_identity_random_functions():
    rng = np.random.default_rng(31)
    for _ in range(50):
        g = LocalFunction(1, ((-1,), (0,), (2,)), rng.normal(size=8))
        poly_prime = tilde_poly(g).deriv()
        for theta in rng.uniform(0.05, 0.95, 10):
            assert abs(tilde_derivative_via_fourier(g, theta) - poly_prime(theta)) <= 1e-10


def test_derivative_identity_against_finite_differences():
    rng = np.random.default_rng(5)
    g = LocalFunction(1, ((0,), (1,)), rng.normal(size=4))
    h = 1e-6
    for theta in (0.3, 0.62):
        fd = (tilde_eval(g, theta + h) - tilde_eval(g, theta - h)) / (2 * h)
        assert abs(tilde_derivative_via_fourier(g, theta) - fd) <= 1e-8


def test_expansion_constant_profile_has_no_remainder():
    torus = Torus(1, 50)
    g = eta(0) * eta(1)
    report = inhomogeneous_expansion(g, torus, alpha=0.5, epsilon=0.02, v=make_field("const", value=0.7))
    assert report.terms[1] == pytest.approx(0.0, abs=1e-15)
    assert report.terms[2] == pytest.approx(0.0, abs=1e-15)
    assert report.remainder == pytest.approx(0.0, abs=1e-14)


def test_expansion_remainder_is_cubic():
    # the truncation is the full multilinear expansion unless three support
    # sites carry nonzero increments; the origin never does
    torus = Torus(1, 10)
    g = eta(1) * eta(2) * eta(3) + 0.5 * eta(1) * eta(2)
    full, half, ratio = expansion_order_check(
        g, torus, alpha=0.5, epsilon=0.2, v=make_field("sin_k", k=1), mode="plain"
    )
    assert abs(full.remainder) > 1e-12  # far enough from rounding to measure
    assert ratio == pytest.approx(8.0, abs=0.5)


def test_expansion_small_epsilon_bound():
    # remainder against the exact expectation at epsilon = 0.01, n = 100
    torus = Torus(1, 100)
    g = eta(0) * eta(1)
    report = inhomogeneous_expansion(
        g, torus, alpha=0.5, epsilon=0.01, v=make_field("cos_k", k=1), mode="plain"
    )
    scale = (0.01 / 100.0) ** 3
    assert abs(report.remainder) <= 1e3 * scale


def test_gradient_mode_matches_difference_of_plain_expansions():
    torus = Torus(1, 20)
    alpha, epsilon = 0.5, 0.05
    v = make_field("cos_k", k=1)
    g = eta(0)
    grad = inhomogeneous_expansion(g, torus, alpha, epsilon, v, mode="gradient_j", j=1)
    plain_g = inhomogeneous_expansion(g, torus, alpha, epsilon, v, mode="plain")
    plain_shift = inhomogeneous_expansion(g.translate((-1,)), torus, alpha, epsilon, v, mode="plain")
    assert grad.terms[0] == pytest.approx(plain_shift.terms[1] - plain_g.terms[1], abs=1e-12)
    assert grad.terms[1] == pytest.approx(plain_shift.terms[2] - plain_g.terms[2], abs=1e-12)
    assert grad.exact == pytest.approx(plain_shift.exact - plain_g.exact, abs=1e-13)


def test_gradient_mode_cubic_order():
    torus = Torus(1, 24)
    g = eta(1) * eta(2) * eta(3)
    full, half, ratio = expansion_order_check(
        g, torus, alpha=0.5, epsilon=0.2, v=make_field("sin_k", k=1), mode="gradient_j", j=1
    )
    assert abs(full.remainder) > 1e-13
    assert ratio == pytest.approx(8.0, abs=0.5)


def test_two_site_expansion_is_exact():
    # degree-2 support: the truncation IS the full multilinear expansion
    torus = Torus(1, 24)
    report = inhomogeneous_expansion(
        eta(0) * eta(1), torus, alpha=0.5, epsilon=0.2, v=make_field("sin_k", k=1)
    )
    assert report.remainder == pytest.approx(0.0, abs=1e-15)
