import numpy as np
import pytest
from numpy.testing import assert_allclose

from wasep.exact import (
    StateSpaceTooLargeError,
    adjoint_apply_one,
    build_generator,
    config_index,
    detailed_balance_defect,
    dirichlet_form,
    entropy_and_dirichlet,
    entropy_production_check,
    evolve,
    index_config,
    product_measure_vector,
    relative_entropy,
    restrict,
    sector_indices,
)
from wasep.lattice import Torus
from wasep.measures import DensityProfile, product_relative_entropy
from wasep.pde import semidiscrete_solve
from wasep.rates import beta_environment, ssep
from wasep.scaling import ScalingPlan


def test_config_index_round_trip():
    config = np.array([1, 0, 1, 1], dtype=np.uint8)
    assert config_index(config) == 0b1101
    assert_allclose(index_config(13, 4), config)


def test_generator_row_sums_vanish():
    torus = Torus(1, 4)
    scaling = ScalingPlan(d=1, n=4, a_n=2.0)
    for spec in (ssep(1), beta_environment(0.2)):
        for parts in ("S", "T", "both"):
            gen = build_generator(spec, torus, scaling, parts=parts)
            rows = np.asarray(gen.matrix.sum(axis=1)).ravel()
            assert_allclose(rows, 0.0, atol=1e-9)


def test_single_particle_sector_exit_rates():
    # one particle on a ring of 3 with unit rates: two discordant bonds,
    # each firing at n^2
    n = 3
    torus = Torus(1, n)
    scaling = ScalingPlan(d=1, n=n, a_n=1.0)
    gen = build_generator(ssep(1), torus, scaling, parts="S")
    sector = sector_indices(torus, 1)
    sub = restrict(gen, sector)
    assert sub.shape == (3, 3)
    assert_allclose(sub.diagonal(), -2.0 * n**2)


def test_bernoulli_measures_are_stationary():
    torus = Torus(1, 4)
    scaling = ScalingPlan(d=1, n=4, a_n=2.0)
    for spec in (ssep(1), beta_environment(0.2)):
        gen = build_generator(spec, torus, scaling, parts="both")
        for alpha in (0.3, 0.5, 0.7):
            nu = product_measure_vector(DensityProfile.constant(torus, alpha))
            drift = nu @ gen.matrix
            assert np.max(np.abs(drift)) <= 1e-10 * gen.matrix.data.max()


def test_sectors_are_invariant_subspaces():
    torus = Torus(1, 4)
    scaling = ScalingPlan(d=1, n=4, a_n=2.0)
    gen = build_generator(beta_environment(0.2), torus, scaling, parts="both")
    dense = gen.matrix.toarray()
    for k in range(5):
        inside = sector_indices(torus, k)
        outside = np.setdiff1d(np.arange(16), inside)
        assert np.all(dense[np.ix_(inside, outside)] == 0.0)


def test_detailed_balance_of_symmetric_part():
    torus = Torus(1, 4)
    scaling = ScalingPlan(d=1, n=4, a_n=2.0)
    for spec in (ssep(1), beta_environment(0.2)):
        gen_s = build_generator(spec, torus, scaling, parts="S")
        for alpha in (0.4, 0.5):
            prof = DensityProfile.constant(torus, alpha)
            assert detailed_balance_defect(gen_s, prof) <= 1e-12 * gen_s.matrix.data.max()


def test_adjoint_apply_one_constant_profile_is_zero():
    torus = Torus(1, 4)
    scaling = ScalingPlan(d=1, n=4, a_n=2.0)
    for spec in (ssep(1), beta_environment(0.2)):
        for parts in ("S", "both"):
            gen = build_generator(spec, torus, scaling, parts=parts)
            out = adjoint_apply_one(gen, DensityProfile.constant(torus, 0.5))
            assert np.max(np.abs(out)) <= 1e-9


def test_evolution_preserves_stationary_law():
    torus = Torus(1, 4)
    scaling = ScalingPlan(d=1, n=4, a_n=2.0)
    gen = build_generator(ssep(1), torus, scaling, parts="both")
    nu = product_measure_vector(DensityProfile.constant(torus, 0.5))
    out = evolve(gen, nu, [0.0, 0.1, 0.3])
    for row in out:
        assert row.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.max(np.abs(row - nu)) <= 1e-9


def test_evolution_mass_conservation_from_point_mass():
    torus = Torus(1, 4)
    scaling = ScalingPlan(d=1, n=4, a_n=2.0)
    gen = build_generator(beta_environment(0.2), torus, scaling, parts="both")
    mu0 = np.zeros(16)
    mu0[config_index(np.array([1, 1, 0, 0], dtype=np.uint8))] = 1.0
    out = evolve(gen, mu0, [0.05, 0.5])
    for row in out:
        assert row.sum() == pytest.approx(1.0, abs=1e-11)
        assert row.min() >= 0.0
    # mass never leaves the two-particle sector
    sector = set(sector_indices(torus, 2).tolist())
    for i, p in enumerate(out[-1]):
        if i not in sector:
            assert p == 0.0


def test_entropy_matrix_path_matches_product_formula():
    torus = Torus(1, 5)
    rng = np.random.default_rng(4)
    target = DensityProfile(torus, rng.uniform(0.2, 0.8, 5))
    reference = DensityProfile(torus, rng.uniform(0.2, 0.8, 5))
    mu = product_measure_vector(target)
    h, _ = entropy_and_dirichlet(mu, reference)
    assert h == pytest.approx(product_relative_entropy(target, reference), abs=1e-12)


def test_entropy_and_dirichlet_trivial_cases():
    torus = Torus(1, 4)
    prof = DensityProfile.constant(torus, 0.5)
    nu = product_measure_vector(prof)
    h, i = entropy_and_dirichlet(nu, prof)
    assert h == pytest.approx(0.0, abs=1e-14)
    assert i == pytest.approx(0.0, abs=1e-14)


def test_entropy_decays_towards_equilibrium():
    n = 6
    torus = Torus(1, n)
    scaling = ScalingPlan(d=1, n=n, a_n=1.0)
    gen = build_generator(ssep(1), torus, scaling, parts="S")
    prof = DensityProfile.constant(torus, 0.5)
    start = DensityProfile(torus, np.linspace(0.2, 0.8, n))
    mu0 = product_measure_vector(start)
    times = [0.0, 0.002, 0.005, 0.01, 0.02, 0.05]
    rows = evolve(gen, mu0, times)
    nu = product_measure_vector(prof)
    entropies = [relative_entropy(row, nu) for row in rows]
    for a, b in zip(entropies, entropies[1:]):
        assert b <= a + 1e-12


def test_dirichlet_form_positive_for_nonconstant_density():
    torus = Torus(1, 4)
    prof = DensityProfile.constant(torus, 0.5)
    nu = product_measure_vector(prof)
    mu = np.zeros(16)
    mu[config_index(np.array([1, 0, 1, 0], dtype=np.uint8))] = 1.0
    assert dirichlet_form(mu / nu, nu, torus) > 0.0


def test_size_gate():
    with pytest.raises(StateSpaceTooLargeError):
        build_generator(ssep(1), Torus(1, 25), ScalingPlan(d=1, n=25, a_n=2.0))


def test_entropy_production_stationary_case():
    n = 4
    torus = Torus(1, n)
    scaling = ScalingPlan(d=1, n=n, a_n=2.0)
    alpha = 0.5
    mu0 = product_measure_vector(DensityProfile.constant(torus, alpha))
    report = entropy_production_check(
        ssep(1),
        torus,
        scaling,
        w_of_t=lambda t: np.full(n, alpha),
        wdot_of_t=lambda t: np.zeros(n),
        mu0=mu0,
        t_grid=[0.01, 0.05],
    )
    assert report.passed
    for row in report.rows:
        assert row.dh_dt == pytest.approx(0.0, abs=1e-8)
        assert row.rhs == pytest.approx(0.0, abs=1e-8)


def test_entropy_production_inequality_along_flow():
    n = 4
    torus = Torus(1, n)
    scaling = ScalingPlan(d=1, n=n, a_n=2.0)
    spec = ssep(1)
    v0 = np.cos(2 * np.pi * np.arange(n) / n)
    t_end = 0.1
    grid = [0.01, 0.04, 0.08]
    traj = semidiscrete_solve(spec, v0, scaling, t_end=t_end, snapshot_times=sorted(
        {s for t in grid for s in (t - 1e-5, t, t + 1e-5)} | {t_end}
    ))

    def w_of(t):
        return 0.5 + scaling.epsilon * traj.at(t, tol=1e-12)

    from wasep.adjoint import semidiscrete_rhs

    def wdot_of(t):
        return scaling.epsilon * semidiscrete_rhs(spec, traj.at(t, tol=1e-12), scaling)

    mu0 = product_measure_vector(DensityProfile(torus, 0.5 + scaling.epsilon * v0))
    report = entropy_production_check(
        spec, torus, scaling, w_of, wdot_of, mu0, grid, fd_step=1e-5
    )
    assert report.passed
    assert report.max_entropy < 1.0
