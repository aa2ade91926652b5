import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cocycle_lab import (
    STABLE,
    UNSTABLE,
    Cocycle,
    FunctionField,
    MatrixField,
    TorusPoint,
    TrigSection,
    coboundary_residual,
    holonomy,
    holonomy_property_suite,
    inverse_cocycle,
    leaf_point,
    random_matrix_field,
    rotation,
    sample_points,
    solve_twisted_coboundary,
    stable_holonomy,
    step,
    trajectory_sum,
    twisted_difference,
    twisted_holonomy,
    twisted_holonomy_apply,
    twisted_invariance_residual,
    unstable_holonomy,
)
from cocycle_lab.errors import LeafMismatch, NoConvergence
from cocycle_lab.holonomy import fixed_point_value

from conftest import constant

ETA = TrigSection(2, [0.1, -0.2], (((1, 0), [0.3, 0.1], [0.0, 0.2]),
                                   ((1, -1), [0.05, 0.1], [0.1, 0.0]),
                                   ((0, 2), [0.0, 0.1], [0.05, 0.0])))


@pytest.fixture(scope="module")
def conformal_coboundary(cat):
    """B_x = C(fx) R C(x)^{-1} with R a rotation; its holonomies are C(y) C(x)^{-1}."""
    C = random_matrix_field(2, 2, 0.3, 3, seed=9)
    R = rotation(0.4)
    L = cat.matrix.T.astype(float)
    B = Cocycle(cat, FunctionField(2, lambda c: C.evaluate_many(c @ L.T) @ R @ C.inverse_many(c),
                                   lambda c: C.evaluate_many(c) @ R.T @ C.inverse_many(c @ L.T)))
    return B, C


@pytest.fixture(scope="module")
def rotation_twist(cat):
    R = rotation(0.7)
    F = Cocycle(cat, MatrixField.constant(R))
    phi = ETA - ETA.precompose(cat.matrix).mapped(R.T)
    return F, phi


@settings(max_examples=15, deadline=None)
@given(st.floats(0, 1, exclude_max=True), st.floats(0, 1, exclude_max=True),
       st.floats(-0.3, 0.3), st.sampled_from(["stable", "unstable"]))
def test_holonomy_of_conformal_coboundary(conformal_coboundary, cat, a, b, t, kind):
    B, C = conformal_coboundary
    x = TorusPoint.from_coords([a, b])
    y = leaf_point(cat, x, STABLE if kind == "stable" else UNSTABLE, t)
    H = holonomy(B, x, y, kind).matrix
    expect = C.evaluate(y) @ C.inverse_many(x.coords[None, :])[0]
    assert np.allclose(H, expect, atol=1e-9)


def test_holonomy_of_constant_cocycle_is_identity(cat):
    x = TorusPoint.from_coords([0.2, 0.9])
    y = leaf_point(cat, x, STABLE, 0.2)
    H = stable_holonomy(constant(cat, rotation(1.0)), x, y)
    assert np.allclose(H.matrix, np.eye(2), atol=1e-14)


def test_unstable_is_stable_of_inverse(near_identity, cat):
    x = TorusPoint.from_coords([0.3, 0.4])
    y = leaf_point(cat, x, UNSTABLE, 0.05)
    Hu = unstable_holonomy(near_identity, x, y).matrix
    Hs = holonomy(inverse_cocycle(near_identity), x, y, "stable").matrix
    assert np.allclose(Hu, Hs, atol=1e-12)


def test_equivariance_at_one_point(near_identity, cat):
    # H_{fx,fy} A_x = A_y H_{x,y}
    x = TorusPoint.from_coords([0.61, 0.05])
    y = leaf_point(cat, x, STABLE, 0.1)
    H = stable_holonomy(near_identity, x, y).matrix
    Hf = stable_holonomy(near_identity, step(cat, x, 1), step(cat, y, 1)).matrix
    Ax, Ay = near_identity.at(np.array([x.coords, y.coords]))
    assert np.allclose(Hf @ Ax, Ay @ H, atol=1e-9)


def test_not_fiber_bunched_raises(cat):
    x = TorusPoint.from_coords([0.3, 0.4])
    y = leaf_point(cat, x, STABLE, 0.05)
    with pytest.raises(NoConvergence):
        stable_holonomy(constant(cat, np.diag([2.0, 0.5])), x, y)


def test_off_leaf_raises(near_identity):
    with pytest.raises(LeafMismatch):
        stable_holonomy(near_identity, [0.1, 0.1], [0.3, 0.2])


def test_property_suite_passes(near_identity):
    rep = holonomy_property_suite(near_identity, samples=12)
    assert rep.passed, rep.csv()
    assert rep["H4_holder"].fitted_slope >= 0.9


def test_property_suite_unstable(near_identity):
    rep = holonomy_property_suite(near_identity, samples=6, kind="unstable")
    assert rep.passed, rep.csv()


def test_trajectory_sum_matches_definition(cat, rotation_twist):
    F, phi = rotation_twist
    x = TorusPoint.from_coords([0.2, 0.3])
    hist = trajectory_sum(F, phi, x, 6, history=True)
    total = np.zeros(2)
    for k in range(6):
        total = total + np.linalg.matrix_power(rotation(-0.7), k) @ phi.evaluate(step(cat, x, k))
        assert np.allclose(hist[k + 1], total, atol=1e-14)


def test_series_solution_for_expanding_twist(cat):
    # F = 2 Id and constant phi = v: eta = v + eta / 2, so eta = 2 v
    F = constant(cat, 2 * np.eye(2))
    v = TrigSection(2, [1.0, 2.0])
    assert np.allclose(solve_twisted_coboundary(F, v, [0.1, 0.3]), [2.0, 4.0], atol=1e-9)


def test_rotation_twist_recovers_known_solution(cat, rotation_twist):
    F, phi = rotation_twist
    for x in sample_points(cat, 4, 8):
        ex = solve_twisted_coboundary(F, phi, x)
        efx = solve_twisted_coboundary(F, phi, step(cat, x, 1))
        assert np.allclose(ex, ETA.evaluate(x), atol=1e-9)
        assert coboundary_residual(F, phi, x, ex, efx) < 1e-9


def test_twisted_invariance_report(rotation_twist):
    F, phi = rotation_twist
    rep = twisted_invariance_residual(F, phi, lambda p: ETA.evaluate(p), samples=6)
    assert rep.passed, rep.csv()


def test_twisted_offsets_compose(cat, rotation_twist):
    # Phi_{z,x} = Phi_{y,x} + H_{y,x} Phi_{z,y} for x, y, z on one stable leaf
    _, phi = rotation_twist
    G = Cocycle(cat, MatrixField(2, rotation(0.7),
                                 (((1, 0), np.diag([0.1, 0.05]), np.zeros((2, 2))),)))
    x = TorusPoint.from_coords([0.2, 0.6])
    y, z = leaf_point(cat, x, STABLE, 0.1), leaf_point(cat, x, STABLE, -0.15)
    dyx, dzx, dzy = (twisted_difference(G, phi, x, y), twisted_difference(G, phi, x, z),
                     twisted_difference(G, phi, y, z))
    H = holonomy(G, y, x).matrix
    assert np.allclose(dzx, dyx + H @ dzy, atol=1e-10)
    v = np.array([0.3, -1.0])
    two_step = twisted_holonomy_apply(G, phi, y, z, twisted_holonomy_apply(G, phi, x, y, v))
    assert np.allclose(two_step, twisted_holonomy_apply(G, phi, x, z, v), atol=1e-10)


def test_unstable_twisted_invariance(cat, rotation_twist):
    F, phi = rotation_twist
    x = TorusPoint.from_coords([0.2, 0.6])
    y = leaf_point(cat, x, UNSTABLE, 0.1)
    moved = twisted_holonomy(F, phi, x, y, "unstable").apply(ETA.evaluate(x))
    assert np.allclose(moved, ETA.evaluate(y), atol=1e-9)


def test_obstruction_at_fixed_point(cat):
    # F = Id and phi = 1: the orbit sum over the fixed point is nonzero
    with pytest.raises(NoConvergence):
        fixed_point_value(constant(cat, np.eye(2)), TrigSection(2, [1.0, 0.0]))
    with pytest.raises(NoConvergence):
        solve_twisted_coboundary(constant(cat, np.eye(2)), TrigSection(2, [1.0, 0.0]),
                                 [0.1, 0.2], method="holonomy")


def test_unknown_method(cat, rotation_twist):
    F, phi = rotation_twist
    with pytest.raises(ValueError):
        solve_twisted_coboundary(F, phi, [0.1, 0.2], method="magic")
