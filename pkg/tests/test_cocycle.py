import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cocycle_lab import (
    Cocycle,
    MatrixField,
    TorusPoint,
    growth_report,
    inverse_cocycle,
    iterate,
    lyapunov_spectrum,
    polynomial_growth_degree,
    quasiconformal_distortion,
    random_matrix_field,
    rotation,
    sample_points,
    step,
)
from cocycle_lab.errors import CocycleOverflow

from conftest import constant

JORDAN = [[1.0, 1.0], [0.0, 1.0]]


@pytest.fixture(scope="module")
def wobbly(cat):
    return Cocycle(cat, random_matrix_field(2, 2, 0.4, 3, seed=11))


@settings(max_examples=30, deadline=None)
@given(st.integers(-15, 15), st.integers(-15, 15))
def test_cocycle_identity(wobbly, cat, n, m):
    # A^{n+m}_x = A^m_{f^n x} A^n_x
    x = TorusPoint.from_coords([0.123, 0.456])
    lhs = iterate(wobbly, x, n + m)
    rhs = iterate(wobbly, step(cat, x, n), m) @ iterate(wobbly, x, n)
    assert np.allclose(lhs, rhs, rtol=1e-10, atol=1e-10 * np.abs(lhs).max())


def test_negative_iterate_is_inverse(wobbly):
    x = TorusPoint.from_coords([0.3, 0.1])
    assert np.allclose(iterate(wobbly, x, -7) @ iterate(wobbly, step(wobbly.base, x, -7), 7),
                       np.eye(2), atol=1e-12)


def test_inverse_cocycle_iterates_backwards(wobbly):
    x = TorusPoint.from_coords([0.71, 0.2])
    inv = inverse_cocycle(wobbly)
    assert np.allclose(iterate(inv, x, 9), iterate(wobbly, x, -9), atol=1e-12)


def test_overflow_detected(cat):
    with pytest.raises(CocycleOverflow):
        iterate(constant(cat, np.diag([1e100, 1e-100])), TorusPoint.from_coords([0.1, 0.2]), 5)


def test_fiber_bunching_passes_for_mild_diagonal(cat):
    r = growth_report(constant(cat, np.diag([1.1, 1 / 1.1])), "fiber_bunching")
    assert r.verdict == "pass" and r.theta_hat < 0.5
    # oracle: (1.1^2 nu)^{1/1} since the cocycle is constant and diagonal
    assert r.theta_hat == pytest.approx(1.21 * cat.nu, rel=1e-10)


def test_fiber_bunching_fails_for_strong_diagonal(cat):
    r = growth_report(constant(cat, np.diag([2.0, 0.5])), "fiber_bunching")
    assert r.verdict == "fail" and r.theta_hat > 1.5
    assert r.theta_hat == pytest.approx(4 * cat.nu, rel=1e-10)


def test_bounded_kind(cat):
    assert growth_report(constant(cat, rotation(0.7)), "bounded").verdict == "pass"
    assert growth_report(constant(cat, np.diag([1.2, 1 / 1.2])), "bounded").verdict == "fail"


def test_unknown_kind(cat):
    with pytest.raises(ValueError):
        growth_report(constant(cat, np.eye(2)), "nonsense")


def test_growth_csv_row(cat):
    r = growth_report(constant(cat, np.diag([1.1, 1 / 1.1])), "fiber_bunching", n_max=32)
    assert len(r.csv_row()) == len(r.CSV_HEADER)
    assert r.as_dict()["kind"] == "fiber_bunching"


def test_quasiconformal(cat):
    iso = quasiconformal_distortion(constant(cat, rotation(0.3)))
    assert iso.verdict == "pass" and iso.K_hat == pytest.approx(1.0, abs=1e-12)
    jordan = quasiconformal_distortion(constant(cat, JORDAN))
    # |J^n| |J^-n| grows like n^2
    assert jordan.verdict == "fail" and 1.8 < jordan.degree_hat < 2.1


def test_polynomial_degree_of_jordan_block(cat):
    deg, c_hat = polynomial_growth_degree(constant(cat, JORDAN), MatrixField.scalar(1.0))
    assert deg == pytest.approx(1.0, abs=0.05)
    assert c_hat > 0


def test_polynomial_degree_of_rotation_is_zero(cat):
    deg, _ = polynomial_growth_degree(constant(cat, rotation(1.0)), MatrixField.scalar(1.0))
    assert abs(deg) < 1e-6


def test_lyapunov_constant_diagonal(cat):
    x = sample_points(cat, 1, 0)[0]
    spec = lyapunov_spectrum(constant(cat, np.diag([2.0, 0.5])), x)
    assert np.allclose(spec, [np.log(2), -np.log(2)], atol=1e-6)


def test_lyapunov_invariant_under_constant_conjugation(cat):
    rng = np.random.default_rng(5)
    H = rng.standard_normal((2, 2)) + 2 * np.eye(2)
    x = sample_points(cat, 1, 1)[0]
    A = np.diag([2.0, 0.5])
    a = lyapunov_spectrum(constant(cat, A), x)
    b = lyapunov_spectrum(constant(cat, H @ A @ np.linalg.inv(H)), x)
    assert np.allclose(a, b, atol=1e-6)


def test_lyapunov_sum_is_mean_log_det(cat):
    # the sum of exponents is the Birkhoff average of log |det A|, here exactly 0.1
    F = MatrixField(2, np.exp(0.05) * np.eye(2),
                    (((1, 0), np.diag([0.3, -0.3]), np.zeros((2, 2))),))
    x = sample_points(cat, 1, 2)[0]
    spec = lyapunov_spectrum(Cocycle(cat, F), x, n_steps=5000)
    assert sum(spec) == pytest.approx(0.1, abs=1e-10)


def test_lyapunov_invariant_under_analytic_conjugation(cat):
    # boundary terms make the difference O(log cond(C) / n), not zero
    C = random_matrix_field(2, 2, 0.3, 3, seed=3)
    A = np.diag([2.0, 0.5])
    L = cat.matrix.T.astype(float)
    from cocycle_lab import FunctionField
    B = Cocycle(cat, FunctionField(2, lambda c: C.evaluate_many(c @ L.T) @ A @ C.inverse_many(c)))
    x = sample_points(cat, 1, 4)[0]
    n = 10_000
    a = lyapunov_spectrum(constant(cat, A), x, n_steps=n)
    b = lyapunov_spectrum(B, x, n_steps=n)
    assert np.allclose(a, b, atol=10 / n)
