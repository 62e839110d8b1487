import math

import numpy as np
import pytest

from src.constants import FAMILY_CACHE_SIZE, VariableSide
from src.exceptions import DomainError, OracleError, UsageError
from src.matrix_core import build_params, residual
from src.mvop import (MVOPFamily, MatrixPolynomial, darboux_residual, delta_s_adjoint_residual,
                      eigen_residuals, family_for, gram_schmidt_oracle, interpolate_coefficients,
                      mixed_difference_residual, nonlinear_norm_residual, norm_chain_residual, norm_d,
                      norm_d0_closed, norm_d_lambda_ratio, norm_d_routes_residual, norm_h, oracle_residual,
                      orthogonality_residual, p_at_zero, p_at_zero_residual, p_eval, p_polynomial,
                      r_difference_residual, r_zero_recursion_residual, rec_b, rec_b_routes_residual,
                      rec_b_symmetry_residual, rec_c, rec_c_residual, recurrence_residual,
                      rodrigues_eval, rodrigues_residual, shift_g, shift_g_routes_residual,
                      shift_residuals, two_by_two_at_zero, two_by_two_display, xi, xi_branch_gap,
                      xi_endpoints, xi_j_recursion_residual, xi_k_recursion_residual, gauge_residual,
                      _family_for_key)

E = math.e


class TestMatrixPolynomial:
    def test_scalar_evaluation_and_degree(self):
        poly = MatrixPolynomial([np.eye(2), 2 * np.eye(2)])
        assert poly.degree == 1
        assert poly.size == 2
        assert not poly.is_monic()
        assert np.allclose(poly(3), 7 * np.eye(2))

    def test_matrix_variable_sides(self):
        A0 = np.array([[1.0, 2.0], [0.0, 1.0]])
        M = np.array([[0.0, 1.0], [1.0, 0.0]])
        left = MatrixPolynomial([A0, np.eye(2)], VariableSide.LEFT_MATRIX)
        right = MatrixPolynomial([A0, 3 * np.eye(2)], VariableSide.RIGHT_MATRIX)
        assert np.allclose(left(M), M + A0)
        assert np.allclose(right(M), A0 + 3 * M)

    def test_bad_arguments(self):
        with pytest.raises(DomainError, match="at least one coefficient"):
            MatrixPolynomial([])
        with pytest.raises(UsageError, match="scalar argument"):
            MatrixPolynomial([np.eye(2)])(np.eye(2))
        with pytest.raises(UsageError, match="expected"):
            MatrixPolynomial([np.eye(2)], VariableSide.LEFT_MATRIX)(np.eye(3))

    def test_interpolation_recovers_coefficients(self):
        poly = interpolate_coefficients([x * x * np.eye(2) + np.ones((2, 2)) for x in range(3)])
        assert np.allclose(poly.coeffs[0], np.ones((2, 2)))
        assert np.allclose(poly.coeffs[1], 0.0, atol=1e-12)
        assert poly.is_monic()


@pytest.mark.unit
class TestTwoByTwoWorkedExample:
    """N=2, a=1, lambda=0."""

    def test_xi_first_coefficient(self, params_2):
        assert xi(params_2, 1, 1, 1) == pytest.approx(-0.5)
        assert xi(params_2, 1, 2, 0) == 0.0
        first, _ = xi_endpoints(params_2, 1)
        assert first == pytest.approx(-0.5)

    def test_norms(self, params_2):
        assert np.allclose(norm_d(params_2, 0), np.diag([E, 2 * E]))
        assert np.allclose(norm_d0_closed(params_2), np.diag([E, 2 * E]))
        assert np.allclose(norm_h(params_2, 0), E * np.array([[1.0, 1.0], [1.0, 3.0]]))

    def test_first_polynomial(self, params_2):
        assert np.allclose(p_eval(params_2, 0, 5), np.eye(2))
        assert np.allclose(rec_b(params_2, 0), [[0.5, 0.5], [0.0, 2.0]])
        assert np.allclose(p_at_zero(params_2, 1), [[-0.5, -0.5], [0.0, -2.0]])
        assert np.allclose(p_eval(params_2, 1, 0), [[-0.5, -0.5], [0.0, -2.0]])
        assert np.allclose(p_eval(params_2, 1, 4), 4 * np.eye(2) - rec_b(params_2, 0))
        assert np.allclose(rec_c(params_2, 0), 0.0)

    def test_closed_two_by_two_forms(self):
        p = build_params(2, 1.0, 1)
        for n in range(1, 4):
            assert residual(two_by_two_at_zero(p, n), p_eval(p, n, 0)) < 1e-10
            for x in range(4):
                assert residual(two_by_two_display(p, n, x), p_eval(p, n, x)) < 1e-10

    def test_closed_forms_need_two_by_two(self, params_3):
        with pytest.raises(DomainError, match="N = 2"):
            two_by_two_display(params_3, 1, 0)
        with pytest.raises(DomainError, match="N = 2"):
            two_by_two_at_zero(params_3, 1)


def test_polynomials_are_monic(grid_params):
    for n in range(4):
        poly = p_polynomial(grid_params, n)
        assert poly.degree == n
        assert poly.is_monic(tol=1e-8)


def test_xi_recursions_and_branches(grid_params):
    for n in range(5):
        assert xi_j_recursion_residual(grid_params, n) < 1e-10
        for j in range(1, grid_params.N + 1):
            assert xi_k_recursion_residual(grid_params, j, n) < 1e-10
    for j in range(1, grid_params.N + 1):
        assert xi_branch_gap(grid_params, j, 1, grid_params.N - j) < 1e-10
    with pytest.raises(DomainError, match="n \\+ j = N"):
        xi_branch_gap(grid_params, 1, 1, grid_params.N)


def test_xi_last_endpoint(grid_params):
    for n in range(4):
        _, last = xi_endpoints(grid_params, n)
        assert xi(grid_params, grid_params.N, 1, n) == pytest.approx(last, rel=1e-10)


def test_r_difference_and_value_at_zero(grid_params):
    for n in range(4):
        for x in range(4):
            assert r_difference_residual(grid_params, n, x) < 1e-9
    for n in range(1, 4):
        assert r_zero_recursion_residual(grid_params, n) < 1e-10
        assert p_at_zero_residual(grid_params, n) < 1e-10


def test_mixed_difference(grid_params):
    for n in range(1, 4):
        for x in range(4):
            assert mixed_difference_residual(grid_params, n, x) < 1e-8
    with pytest.raises(DomainError, match="n >= 1"):
        mixed_difference_residual(grid_params, 0, 1)


def test_norm_routes(grid_params):
    for n in range(5):
        assert norm_d_routes_residual(grid_params, n) < 1e-10
        assert norm_chain_residual(grid_params, n) < 1e-9
    for n in range(1, 4):
        assert nonlinear_norm_residual(grid_params, n) < 1e-8


def test_norm_guards(params_2):
    with pytest.raises(DomainError, match="lambda >= 1"):
        norm_d_lambda_ratio(params_2, 0)
    with pytest.raises(DomainError, match="n = 1"):
        nonlinear_norm_residual(params_2, 0)


def test_recurrence_coefficients(grid_params):
    for n in range(4):
        assert rec_b_symmetry_residual(grid_params, n) < 1e-9
        assert rec_b_routes_residual(grid_params, n) < 1e-9
        assert rec_c_residual(grid_params, n) < 1e-9
        for x in range(4):
            assert recurrence_residual(grid_params, n, x) < 1e-9


def test_orthogonality(grid_params, truncation):
    for n in range(3):
        for m in range(3):
            assert orthogonality_residual(grid_params, n, m, truncation) < 1e-9


def test_shift_operators(grid_params, truncation):
    for n in range(4):
        for x in range(4):
            backward, forward = shift_residuals(grid_params, n, x)
            assert backward < 1e-9
            assert forward < 1e-9
    for n in range(1, 4):
        assert shift_g_routes_residual(grid_params, n) < 1e-10
    assert delta_s_adjoint_residual(grid_params, 2, 1, truncation) < 1e-9
    with pytest.raises(DomainError, match="n >= 1"):
        shift_g(grid_params, 0)


def test_eigen_relations(grid_params):
    for n in range(4):
        for x in range(4):
            values = eigen_residuals(grid_params, n, x)
            assert ("s_delta" in values) == (grid_params.lam >= 1)
            assert max(values.values()) < 1e-9


def test_darboux_needs_positive_lambda(params_2, params_3):
    with pytest.raises(DomainError, match="lambda >= 1"):
        darboux_residual(params_2, 1, 1)
    for n in range(3):
        for x in range(3):
            assert darboux_residual(params_3, n, x) < 1e-9


def test_rodrigues(grid_params):
    for n in range(4):
        for x in range(4):
            assert rodrigues_residual(grid_params, n, x) < 1e-8
    with pytest.raises(DomainError, match="n <= 6"):
        rodrigues_eval(grid_params, 7, 0)


@pytest.mark.slow
def test_oracle_matches_explicit_polynomials(grid_params, truncation):
    assert oracle_residual(grid_params, 3, truncation) < 1e-6


def test_oracle_degree_cap(params_2):
    with pytest.raises(DomainError, match="limited to degree 12"):
        gram_schmidt_oracle(params_2, 13)


def test_oracle_reports_ill_conditioned_gram(params_2, truncation, mocker):
    mocker.patch("src.mvop.np.linalg.cond", return_value=1e20)
    with pytest.raises(OracleError, match="ill-conditioned"):
        gram_schmidt_oracle(params_2, 1, truncation)


def test_gauge_invariance(grid_params):
    for n in range(3):
        assert gauge_residual(grid_params, n, 2) < 1e-10


def test_family_cache_counts(params_2):
    family = MVOPFamily(params_2)
    first = family.norm_h(0)
    second = family.norm_h(0)
    assert first is second
    info = family.cache_info()
    assert info["norm_h"] == {"hits": 1, "misses": 1, "size": 1}
    assert info["norm_d"]["misses"] == 1
    assert np.allclose(family.p_eval(-1, 3), 0.0)
    family.clear_cache()
    assert family.cache_info()["norm_h"] == {"hits": 0, "misses": 0, "size": 0}


def test_family_for_is_shared_per_model():
    assert family_for(build_params(2, 1.5, 1)) is family_for(build_params(2, 1.5, 1))
    assert family_for(build_params(2, 1.5, 1)) is not family_for(build_params(2, 1.5, 2))


def test_family_cache_is_bounded():
    for lam in range(1, FAMILY_CACHE_SIZE + 3):
        family_for(build_params(2, 1.25, lam))
    info = _family_for_key.cache_info()
    assert info.maxsize == FAMILY_CACHE_SIZE
    assert info.currsize <= FAMILY_CACHE_SIZE


@pytest.mark.parametrize("N, a, lam", [(2, 1.0, 1), (3, 2.5, 3), (4, 0.5, 2)])
def test_recurrence_holds_on_the_default_ranges(N, a, lam):
    p = build_params(N, a, lam)
    for n in range(11):
        for x in range(11):
            assert recurrence_residual(p, n, x) < 1e-8


def test_p_bound_dominates_the_values(grid_params):
    family = family_for(grid_params)
    for n in range(5):
        for x in range(5):
            assert np.all(np.abs(family.p_eval(n, x)) <= family.p_bound(n, x) * (1 + 1e-9) + 1e-12)
    assert not np.any(family.p_bound(-1, 2))
