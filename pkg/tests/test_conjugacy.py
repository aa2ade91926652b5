import numpy as np
import pytest

from cocycle_lab import (
    STABLE,
    Cocycle,
    Flag,
    FlagField,
    FunctionField,
    MatrixField,
    TorusPoint,
    block_decompose,
    conjugacy_residual,
    exponent_match_check,
    holder_exponent_estimate,
    inductive_block_solve,
    intertwining_residual,
    invariant_metric,
    invariant_splitting,
    jordan_flag,
    oracle_diagonal_blocks,
    principal_angles,
    random_matrix_field,
    rotation,
    sample_points,
)
from cocycle_lab.errors import (
    GapTooSmall,
    InsufficientSignal,
    MultipleModuli,
    NotBounded,
    NotInvariant,
    SingularC,
    TwistNotBounded,
)
from cocycle_lab.scenarios import conjugated_cocycle, one_exponent_matrix

from conftest import constant


def one_exponent_setup(cat, A, seed=5, scale=0.3):
    C0 = random_matrix_field(A.shape[0], 2, scale, 3, seed=seed)
    A_coc = constant(cat, A)
    B_coc = conjugated_cocycle(A_coc, C0)
    flag, rho = jordan_flag(A)
    flag_B = FlagField(flag.dimensions, lambda c: C0.evaluate_many(c) @ flag.frame, flag.metric)
    DA = block_decompose(A_coc, flag, flag.metric)
    DB = block_decompose(B_coc, flag_B, flag.metric)
    diag = oracle_diagonal_blocks(C0, DA, DB)
    return A_coc, B_coc, C0, flag, flag_B, diag


@pytest.fixture(scope="module")
def rotation_plus_one(cat):
    A = one_exponent_matrix({"rho": 1.05, "angle": 0.9})
    A_coc, B_coc, C0, flag, flag_B, diag = one_exponent_setup(cat, A)
    C = inductive_block_solve(A_coc, B_coc, flag, flag_B, diag, metric=flag.metric)
    return A_coc, B_coc, C0, C


def test_jordan_flag_shapes():
    flag, rho = jordan_flag(one_exponent_matrix({"rho": 1.05, "angle": 0.9}))
    assert flag.dimensions == (1, 3) and rho == pytest.approx(1.05, rel=1e-12)
    flag, rho = jordan_flag([[1.0, 1.0, 0.0], [0.0, 1.0, 1.0], [0.0, 0.0, 1.0]])
    assert flag.dimensions == (1, 2, 3) and rho == pytest.approx(1.0)
    flag, _ = jordan_flag(2 * rotation(0.5))
    assert flag.dimensions == (2,)
    with pytest.raises(MultipleModuli):
        jordan_flag(np.diag([2.0, 0.5]))


def test_jordan_flag_is_invariant_with_isometric_quotients():
    rng = np.random.default_rng(0)
    H = rng.standard_normal((3, 3)) + 3 * np.eye(3)
    A = H @ one_exponent_matrix({"rho": 1.2, "angle": 0.4}) @ np.linalg.inv(H)
    flag, rho = jordan_flag(A)
    Ahat = np.linalg.solve(flag.frame, A @ flag.frame) / rho
    assert np.allclose(np.tril(Ahat[1:, :1]), 0, atol=1e-10)  # V^1 invariant
    for sl in (slice(0, 1), slice(1, 3)):
        blk = Ahat[sl, sl]
        assert np.allclose(blk.T @ blk, np.eye(blk.shape[0]), atol=1e-10)


def test_flag_round_trip_and_validation():
    flag, _ = jordan_flag(one_exponent_matrix({}))
    back = Flag.from_dict(flag.to_dict())
    assert back.dimensions == flag.dimensions
    assert np.array_equal(back.frame, flag.frame) and np.array_equal(back.metric, flag.metric)
    with pytest.raises(ValueError):
        Flag((2, 1), np.eye(2))


def test_principal_angles_resolve_small_angles():
    a = np.array([[1.0], [0.0]])
    b = np.array([[1.0], [1e-10]])
    assert principal_angles(a, b)[0] == pytest.approx(1e-10, rel=1e-6)


def test_block_decompose_rejects_non_invariant_flag(cat):
    bad = Flag((1, 2), np.array([[1.0, 0.0], [1.0, 1.0]]))
    with pytest.raises(NotInvariant) as exc:
        block_decompose(constant(cat, [[1.0, 1.0], [0.0, 1.0]]), bad)
    assert exc.value.index == 1


def test_block_decomposition_is_triangular(cat):
    A = one_exponent_matrix({"rho": 1.05, "angle": 0.9})
    _, B_coc, _, _, flag_B, _ = one_exponent_setup(cat, A)
    DB = block_decompose(B_coc, flag_B, jordan_flag(A)[0].metric)
    pts = np.random.default_rng(0).random((5, 2))
    assert DB.lower_residual(pts).max() < 1e-12
    x = TorusPoint.from_coords([0.3, 0.6])
    assert np.allclose(DB.reassemble(x), B_coc.at(x.coords[None, :])[0], atol=1e-12)
    P = DB.projections(x)
    assert np.allclose(sum(P), np.eye(3), atol=1e-12)


def test_solved_conjugacy_matches_known(rotation_plus_one):
    # with A = 1.05 (R + 1) the off-diagonal block equation at 0 is invertible,
    # so the solution is unique and must be C0
    A_coc, B_coc, C0, C = rotation_plus_one
    pts = np.random.default_rng(4).random((3, 2))
    assert np.allclose(C.evaluate_many(pts), C0.evaluate_many(pts), atol=1e-9)
    row = conjugacy_residual(A_coc, B_coc, C, samples=5, seed=3, limit=1e-8)
    assert row.verdict == "pass"


def test_identity_is_not_a_conjugacy(rotation_plus_one):
    A_coc, B_coc, _, _ = rotation_plus_one
    row = conjugacy_residual(A_coc, B_coc, MatrixField.constant(np.eye(3)), samples=5)
    assert row.verdict == "fail"


def test_intertwining_and_holder(cat, rotation_plus_one):
    A_coc, B_coc, _, C = rotation_plus_one
    assert intertwining_residual(A_coc, B_coc, C, samples=3, limit=1e-7).verdict == "pass"
    beta, r2 = holder_exponent_estimate(C, cat, STABLE, x_samples=3)
    assert beta >= 0.9 and r2 > 0.99


def test_jordan_three_blocks(cat):
    A = np.array([[1.0, 1.0, 0.0], [0.0, 1.0, 1.0], [0.0, 0.0, 1.0]])
    A_coc, B_coc, C0, flag, flag_B, diag = one_exponent_setup(cat, A, seed=8, scale=0.2)
    C = inductive_block_solve(A_coc, B_coc, flag, flag_B, diag, metric=flag.metric)
    assert conjugacy_residual(A_coc, B_coc, C, samples=2, limit=1e-8).verdict == "pass"


def test_growing_twist_rejected(cat):
    A_coc = constant(cat, [[1.0, 1.0], [0.0, 1.0]])
    B_coc = constant(cat, np.diag([2.0, 0.5]))
    flag, _ = jordan_flag(A_coc.generator.constant_factor)
    one = lambda c: np.ones((len(c), 1, 1))
    with pytest.raises(TwistNotBounded):
        inductive_block_solve(A_coc, B_coc, flag, Flag((1, 2), np.eye(2)), [one, one])


def test_singular_c_rejected(cat, rotation_plus_one):
    A_coc, B_coc, _, _ = rotation_plus_one
    C = FunctionField(3, lambda c: np.zeros((len(c), 3, 3)))
    with pytest.raises(SingularC):
        conjugacy_residual(A_coc, B_coc, C, samples=2)


def test_constant_section_has_no_holder_signal(cat):
    with pytest.raises(InsufficientSignal):
        holder_exponent_estimate(MatrixField.constant(np.eye(2)), cat, STABLE, x_samples=2)


def test_invariant_metric(cat):
    H = np.array([[1.0, 0.5], [0.2, 1.1]])
    A = H @ rotation(0.9) @ np.linalg.inv(H)
    x = sample_points(cat, 1, 0)[0]
    m = invariant_metric(constant(cat, A), x)
    assert m.residual < 1e-8
    assert np.allclose(A.T @ m.matrix @ A, m.matrix, atol=1e-8)
    with pytest.raises(NotBounded):
        invariant_metric(constant(cat, np.diag([2.0, 0.5])), x)


def test_perturbation_splitting(cat):
    A = np.diag([2.0, 0.5])
    B = random_matrix_field(2, 2, 0.01, 3, seed=5, constant_factor=A)
    rep = invariant_splitting(Cocycle(cat, B), reference=A, samples=4)
    assert rep.rows().passed, rep.rows().csv()
    assert rep.invariance_residual < 1e-10


def test_splitting_with_rotation_block(cat):
    A = np.zeros((4, 4))
    A[0, 0], A[3, 3] = 2.0, 0.5
    A[1:3, 1:3] = rotation(0.8)
    B = random_matrix_field(4, 2, 0.01, 3, seed=6, constant_factor=A)
    rep = invariant_splitting(Cocycle(cat, B), reference=A, samples=3, exponent_steps=1000)
    assert rep.sizes == (1, 2, 1)
    assert rep.rows().passed, rep.rows().csv()
    assert np.allclose(rep.block_exponents[1], [0.0, 0.0], atol=0.02)


def test_splitting_gap_too_small(cat):
    A = np.diag([1.05, 1 / 1.05])
    with pytest.raises(GapTooSmall):
        invariant_splitting(constant(cat, A), reference=A, n_power=4, samples=1)


def test_exponent_match(cat):
    A = np.diag([2.0, 1.0, 0.5])
    C0 = random_matrix_field(3, 2, 0.3, 3, seed=5)
    A_coc = constant(cat, A)
    B_coc = conjugated_cocycle(A_coc, C0)
    x = sample_points(cat, 1, 0)[0]
    assert exponent_match_check(A_coc, B_coc, C0, x, n_steps=2000).verdict == "pass"
    wrong = MatrixField.constant(np.eye(3))
    assert exponent_match_check(A_coc, B_coc, wrong, x, n_steps=2000).verdict == "fail"
