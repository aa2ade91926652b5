import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cocycle_lab import (
    STABLE,
    UNSTABLE,
    LeafSelector,
    TorusPoint,
    fixed_point,
    lattice_points,
    leaf_coordinate,
    leaf_point,
    make_automorphism,
    orbit,
    sample_points,
    stable_unstable_path,
    step,
    torus_distance,
)
from cocycle_lab.base import leaf_displacements, signed_difference
from cocycle_lab.errors import LeafMismatch, LeafRadiusExceeded, NotHyperbolic, NotUnimodular

coords = st.tuples(st.floats(0, 1, exclude_max=True), st.floats(0, 1, exclude_max=True))


def test_rejects_non_unimodular():
    with pytest.raises(NotUnimodular):
        make_automorphism([[2, 0], [0, 1]])


def test_rejects_non_hyperbolic():
    with pytest.raises(NotHyperbolic):
        make_automorphism([[1, 1], [0, 1]])


def test_rejects_non_integer():
    with pytest.raises(ValueError):
        make_automorphism([[2.5, 1], [1, 1]])


def test_cat_map_rates(cat, golden):
    big, small = golden
    assert cat.nu == pytest.approx(small, rel=1e-14)
    assert cat.nu_hat == pytest.approx(big, rel=1e-14)
    L = cat.matrix.astype(float)
    for B, lam in ((cat.stable_basis, small), (cat.unstable_basis, big)):
        assert np.allclose(L @ B, lam * B, atol=1e-14)


def test_inverse_swaps_leaves(cat):
    inv = cat.inverse()
    assert np.array_equal(inv.matrix, cat.inverse_matrix)
    assert inv.nu == pytest.approx(cat.nu, rel=1e-14)


@settings(max_examples=50, deadline=None)
@given(coords, st.integers(-40, 40), st.integers(-40, 40))
def test_step_is_an_exact_group_action(cat, c, a, b):
    x = TorusPoint.from_coords(c)
    assert step(cat, step(cat, x, a), b) == step(cat, x, a + b)
    assert step(cat, step(cat, x, a), -a) == x


def test_orbit_matches_step(cat):
    x = sample_points(cat, 1, 3)[0]
    raw = orbit(cat, x, 12, -1)
    for k in (0, 5, 12):
        assert TorusPoint.from_raw(raw[k]) == step(cat, x, -k)


def test_fixed_point_is_fixed(cat):
    z = fixed_point(cat)
    assert step(cat, z, 1) == z


def test_lattice_points_are_periodic(cat):
    for p in lattice_points(cat, 5, 20, seed=1):
        # the cat map permutes the 32 x 32 lattice, so every point returns
        raw = orbit(cat, p, 200, 1)
        assert any(TorusPoint.from_raw(r) == p for r in raw[1:])


def test_sample_points_reproducible(cat):
    a = sample_points(cat, 5, 7, stream=2)
    assert a == sample_points(cat, 5, 7, stream=2)
    assert a != sample_points(cat, 5, 7, stream=3)


@settings(max_examples=40, deadline=None)
@given(coords, st.floats(-0.39, 0.39), st.sampled_from(["stable", "unstable"]))
def test_leaf_point_round_trip(cat, c, t, kind):
    x = TorusPoint.from_coords(c)
    y = leaf_point(cat, x, LeafSelector(kind), t)
    w = leaf_coordinate(cat, x, y, kind)
    assert w[0] == pytest.approx(t, abs=1e-15)


def test_leaf_radius_enforced(cat):
    x = TorusPoint.from_coords([0.1, 0.2])
    with pytest.raises(LeafRadiusExceeded):
        leaf_point(cat, x, STABLE, 0.41)


def test_leaf_mismatch(cat):
    x = TorusPoint.from_coords([0.1, 0.2])
    y = leaf_point(cat, x, UNSTABLE, 0.2)
    with pytest.raises(LeafMismatch):
        leaf_coordinate(cat, x, y, "stable")


def test_stable_leaf_contracts_at_exact_rate(cat, golden):
    # exact propagation: |f^n(y) - f^n(x)| = nu^n t for n <= 30
    _, small = golden
    disp = leaf_displacements(cat, np.array([0.3]), "stable", 30)
    norms = np.linalg.norm(disp, axis=1)
    assert np.allclose(norms, 0.3 * small ** np.arange(31), rtol=1e-12, atol=0)


def test_direct_simulation_contracts_up_to_quantisation(cat, golden):
    # simulated orbits agree with exact contraction up to 2^-64 error
    # amplified along the unstable direction
    big, small = golden
    x = TorusPoint.from_coords([0.31, 0.77])
    y = leaf_point(cat, x, STABLE, 0.2)
    for n in (1, 5, 10, 20):
        d = np.linalg.norm(signed_difference(step(cat, y, n).raw_array, step(cat, x, n).raw_array))
        assert abs(d - 0.2 * small**n) <= 4 * 2.0**-64 * big**n


def test_torus_distance_symmetric_and_wrapping():
    a, b = TorusPoint.from_coords([0.95, 0.5]), TorusPoint.from_coords([0.05, 0.5])
    assert torus_distance(a, b) == pytest.approx(0.1, abs=1e-15)
    assert torus_distance(a, b) == torus_distance(b, a)


def test_su_path_connects_points(cat):
    rng = np.random.default_rng(0)
    for _ in range(10):
        a, b = TorusPoint.from_coords(rng.random(2)), TorusPoint.from_coords(rng.random(2))
        legs = stable_unstable_path(cat, a, b)
        assert legs[0][1] == a and legs[-1][2] == b
        for (kind, p, q), nxt in zip(legs, legs[1:] + [None]):
            w = leaf_coordinate(cat, p, q, kind)
            assert np.linalg.norm(w) <= 0.3 + 1e-12
            if nxt is not None:
                assert nxt[1] == q
