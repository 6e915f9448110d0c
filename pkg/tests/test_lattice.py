import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from wasep.lattice import (
    LocalFunction,
    SupportError,
    Torus,
    all_configurations,
    config_from_string,
    config_to_string,
    eval_local,
    particle_count,
    swap,
    translate,
)


def eta(*offset):
    return LocalFunction.occupancy(offset)


def test_swap_definition():
    torus = Torus(1, 2)
    config = np.array([1, 0], dtype=np.uint8)
    assert_array_equal(swap(config, torus, (0,), (1,)), [0, 1])


def test_swap_identity_site():
    torus = Torus(1, 4)
    config = np.array([1, 0, 1, 1], dtype=np.uint8)
    assert_array_equal(swap(config, torus, (2,), (2,)), config)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**9 - 1), st.integers(0, 8), st.integers(0, 8))
def test_swap_involution_preserves_particles(bits, i, j):
    torus = Torus(2, 3)
    config = np.array([(bits >> k) & 1 for k in range(9)], dtype=np.uint8)
    x, y = torus.site(i), torus.site(j)
    once = swap(config, torus, x, y)
    assert particle_count(once) == particle_count(config)
    assert_array_equal(swap(once, torus, x, y), config)


def test_translations_form_group_action():
    torus = Torus(1, 4)
    rng = np.random.default_rng(7)
    config = (rng.random(4) < 0.5).astype(np.uint8)
    for x in torus.sites():
        for y in torus.sites():
            via_two = translate(translate(config, torus, y), torus, x)
            direct = translate(config, torus, torus.add(x, y))
            assert_array_equal(via_two, direct)


def test_eval_local_reads_translated_site():
    torus = Torus(1, 4)
    config = np.array([0, 0, 1, 0], dtype=np.uint8)
    assert eval_local(eta(0), config, torus, (2,)) == 1.0


def test_eval_local_exclusion_pair():
    torus = Torus(1, 2)
    config = np.array([1, 0], dtype=np.uint8)
    f = eta(0) * (1.0 - eta(1))
    assert eval_local(f, config, torus, (0,)) == 1.0


def test_eval_local_group_action_identity():
    torus = Torus(1, 5)
    rng = np.random.default_rng(3)
    config = (rng.random(5) < 0.5).astype(np.uint8)
    f = eta(0) * eta(1) + 2.0 * eta(-1)
    for x in torus.sites():
        for y in torus.sites():
            shifted = f.translate(y)
            x_minus_y = tuple(a - b for a, b in zip(x, y))
            assert eval_local(f, config, torus, x) == pytest.approx(
                eval_local(shifted, config, torus, x_minus_y), abs=1e-14
            )


def test_eval_matches_table_on_every_pattern():
    torus = Torus(1, 8)
    f = eta(-1) * eta(0) + eta(0) * eta(1) - eta(-1) * eta(1)
    placed = f.place(torus)
    for pattern in range(1 << 3):
        config = np.zeros(8, dtype=np.uint8)
        for i, offset in enumerate(f.offsets):
            config[torus.index(torus.wrap(offset))] = (pattern >> i) & 1
        assert placed.eval(config, (0,)) == f.table[pattern]


def test_wrapped_placement_matches_periodic_lift():
    # support {-1, 0, 2} on a torus of 3 sites: offsets -1 and 2 alias
    f = eta(-1) + 3.0 * eta(2) + eta(0)
    torus = Torus(1, 3)
    placed = f.place(torus)
    assert placed.sites == ((0,), (2,))
    for config in all_configurations(torus):
        lifted = {z: int(config[z % 3]) for z in range(-1, 3)}
        expected = lifted[-1] + 3.0 * lifted[2] + lifted[0]
        assert placed.eval(config, (0,)) == pytest.approx(expected)


def test_strict_placement_rejects_aliasing():
    f = eta(-1) + eta(2)
    with pytest.raises(SupportError):
        f.place(Torus(1, 3), strict=True)
    # wide enough torus embeds injectively
    assert len(f.place(Torus(1, 4), strict=True).sites) == 2


def test_local_function_algebra_and_simplify():
    f = (1.0 + 0.0 * eta(3)).simplify()
    assert f.offsets == ()
    g = eta(0) - eta(0)
    assert np.all(g.simplify().table == 0.0)
    prod = eta(0) * eta(1)
    assert prod.table.tolist() == [0.0, 0.0, 0.0, 1.0]


def test_translate_keeps_values():
    f = eta(0) * (1.0 - eta(1)) + 0.5 * eta(-1)
    g = f.translate((2,))
    torus = Torus(1, 8)
    config = (np.random.default_rng(11).random(8) < 0.5).astype(np.uint8)
    for x in torus.sites():
        assert eval_local(g, config, torus, x) == pytest.approx(
            eval_local(f, config, torus, torus.add(x, (2,)))
        )


def test_config_string_round_trip():
    torus = Torus(2, 3)
    rng = np.random.default_rng(5)
    config = (rng.random(torus.size) < 0.4).astype(np.uint8)
    text = config_to_string(config)
    assert len(text) == torus.size
    assert_array_equal(config_from_string(text), config)


def test_row_major_indexing():
    torus = Torus(2, 3)
    assert torus.index((0, 0)) == 0
    assert torus.index((0, 1)) == 1
    assert torus.index((1, 0)) == 3
    assert torus.site(5) == (1, 2)
    assert torus.basis(2) == (0, 1)
