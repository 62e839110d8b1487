import numpy as np
import pytest

from src.exceptions import DomainError
from src.matrix_core import (block_vandermonde, block_vandermonde_det, block_vandermonde_formula, build_params,
                             abs_product, commutator, conditioned_residual, conjugation_residuals, inv, ipa_pow,
                             ipa_star_pow, jfrak, lu_det, matL, matL_inv, matL_structure_residual, residual,
                             scaled_script_A_pow, script_A, script_A_pow, unipotent_pow)


@pytest.mark.unit
def test_build_params_two_by_two(params_2):
    assert np.allclose(params_2.A, [[0.0, 0.0], [1.0, 0.0]])
    assert np.allclose(params_2.J, np.diag([1.0, 2.0]))
    assert np.allclose(params_2.T, np.eye(2))
    assert params_2.key == (2, 1.0, 0, 1.0)


def test_build_params_shift_entry_scales_with_a():
    p = build_params(2, 4.0, 0)
    assert p.A[1, 0] == pytest.approx(0.5)


@pytest.mark.parametrize("N, a, lam, message", [
    (1, 1.0, 0, "N must be"),
    (2, 0.0, 0, "a must be"),
    (2, -1.0, 0, "a must be"),
    (2, 1.0, -1, "lambda must be"),
    (2, 1.0, 0.5, "lambda must be"),
])
def test_build_params_rejects_bad_input(N, a, lam, message):
    with pytest.raises(DomainError, match=message):
        build_params(N, a, lam)


def test_gauge_leaves_structural_matrices_unchanged(params_3):
    other = build_params(3, 2.5, 1, gauge=3.0)
    assert np.allclose(other.A, params_3.A)
    assert np.allclose(other.T, params_3.T)
    assert params_3.shifted(1).lam == 2


def test_unipotent_powers(params_2, params_3):
    A = params_2.A
    assert np.allclose(ipa_pow(params_2, 3), np.eye(2) + 3 * A)
    assert np.allclose(ipa_pow(params_2, -1), np.eye(2) - A)
    assert np.allclose(ipa_star_pow(params_3, 2), ipa_pow(params_3, 2).T)
    assert np.allclose(ipa_pow(params_3, 4) @ ipa_pow(params_3, -4), np.eye(3))
    assert np.allclose(unipotent_pow(np.zeros((3, 3)), 5), np.eye(3))


def test_matL_at_zero_and_inverse(params_2, params_3):
    assert np.allclose(matL(params_2, 0), [[1.0, 0.0], [-1.0, 1.0]])
    for x in range(4):
        assert np.allclose(matL_inv(params_3, x) @ matL(params_3, x), np.eye(3))


def test_structural_commutators(params_3):
    A = params_3.A
    assert np.allclose(commutator(params_3.J, A), A)
    k = 3
    lhs = commutator(params_3.J, ipa_pow(params_3, k))
    assert np.allclose(lhs, k * ipa_pow(params_3, k) - k * ipa_pow(params_3, k - 1))


def test_script_A_is_strictly_upper(params_3):
    S = script_A(params_3, 2)
    assert np.allclose(np.tril(S), 0.0)
    assert np.allclose(script_A_pow(params_3, 2, 2) @ script_A_pow(params_3, 2, -2), np.eye(3))
    # defined at m = 0 because row N of J A* vanishes
    assert np.all(np.isfinite(script_A(build_params(2, 1.0, 0), 0)))


def test_jfrak(params_2):
    assert np.allclose(jfrak(params_2, 2), params_2.J + 2 * (np.eye(2) - params_2.A))


def test_inv_and_lu_det():
    M = np.array([[2.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 4.0]])
    assert np.allclose(inv(M) @ M, np.eye(3))
    assert lu_det(M) == pytest.approx(np.linalg.det(M))
    P = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert lu_det(P) == pytest.approx(-1.0)


def test_residual_is_relative_above_one():
    assert residual(np.eye(2), np.eye(2)) == 0.0
    assert residual([[1e6]], [[1e6 + 1]]) == pytest.approx(1 / (1e6 + 1))
    assert residual([[1e-3]], [[2e-3]]) == pytest.approx(1e-3)


def test_block_vandermonde_matches_product_formula():
    blocks = [n * np.eye(2) + np.triu(np.ones((2, 2)), 1) for n in (1, 3, 4)]
    V = block_vandermonde(blocks)
    assert V.shape == (6, 6)
    expected = block_vandermonde_formula(np.eye(2), [1, 3, 4], 2)
    assert expected == pytest.approx(((3 - 1) * (4 - 1) * (4 - 3)) ** 2)
    assert block_vandermonde_det(blocks) == pytest.approx(expected)
    assert block_vandermonde_det([np.eye(2)]) == 1.0


def test_block_vandermonde_rejects_mixed_shapes():
    with pytest.raises(DomainError, match="expected"):
        block_vandermonde([np.eye(2), np.eye(3)])


@pytest.mark.unit
def test_reference_values():
    p = build_params(3, 2.0, 1)
    assert np.allclose(p.T, np.diag([1.0, 2.0, 3.0]))
    q = build_params(2, 1.0, 0)
    assert np.allclose(matL_inv(q, 0), [[1.0, 0.0], [1.0, 1.0]])
    assert np.allclose(script_A(q, 1), [[0.0, 0.5], [0.0, 0.0]])


def test_block_vandermonde_two_nodes():
    upper = np.array([[0.0, 1.0], [0.0, 0.0]])
    T = np.diag([1.0, 2.0])
    blocks = [0 * T + upper, 1 * T + upper]
    assert block_vandermonde_det(blocks) == pytest.approx(2.0)
    assert block_vandermonde_formula(T, [0, 1], 2) == pytest.approx(2.0)


@pytest.mark.parametrize("k", [-1, -2, -3, -5])
def test_negative_unipotent_powers_are_finite_inverses(params_3, k):
    forward = ipa_pow(params_3, k)
    assert np.all(np.isfinite(forward))
    assert residual(forward @ ipa_pow(params_3, -k), np.eye(3)) < 1e-13
    assert residual(forward, inv(np.linalg.matrix_power(ipa_pow(params_3, 1), -k))) < 1e-13


def test_inverse_of_i_plus_a_is_i_minus_a_plus_a_squared(params_3):
    A = params_3.A
    assert residual(ipa_pow(params_3, -1), np.eye(3) - A + A @ A) < 1e-14


def test_matL_one_step_from_zero(params_3):
    assert residual(matL(params_3, 1), matL(params_3, 0) @ ipa_pow(params_3, 1)) < 1e-13


@pytest.mark.parametrize("N, a, lam", [(2, 1.0, 0), (3, 2.5, 1), (4, 0.5, 2)])
def test_matL_structure_on_negative_and_positive_x(N, a, lam):
    p = build_params(N, a, lam)
    assert max(matL_structure_residual(p, x) for x in range(-5, 16)) < 1e-12


@pytest.mark.parametrize("N, a, lam", [(2, 1.0, 0), (3, 2.5, 1), (4, 0.5, 2)])
def test_conjugations_of_J(N, a, lam):
    p = build_params(N, a, lam)
    worst = max(max(conjugation_residuals(p, x, k)) for x in range(-5, 16) for k in (-3, -1, 2, 4))
    assert worst < 1e-11


def test_scaled_script_A_power_stays_finite():
    p = build_params(4, 0.5, 0)
    for n in range(13):
        value = scaled_script_A_pow(p, n)
        assert np.all(np.isfinite(value))
        assert np.allclose(np.tril(value, -1), 0.0)


def test_block_vandermonde_with_random_upper_parts():
    rng = np.random.default_rng(11)
    T = np.diag([1.0, 2.0, 3.0])
    nodes = [0, 1, 3, 4]
    for _ in range(5):
        blocks = [n * T + np.triu(rng.normal(size=(3, 3)), 1) for n in nodes]
        expected = block_vandermonde_formula(T, nodes, 3)
        assert block_vandermonde_det(blocks) == pytest.approx(expected, rel=1e-8)


def test_conditioned_residual_uses_term_size():
    assert conditioned_residual([[1.0]], [[1.0 + 1e-6]], 1e6) == pytest.approx(1e-12)
    assert conditioned_residual([[3.0]], [[1.0]], 0.0) == pytest.approx(2.0 / 3.0)
    assert abs_product(np.array([[1.0, -2.0]]), np.array([[3.0], [-1.0]])) == pytest.approx(5.0)
