import math

import numpy as np
import pytest

from src.data_models import Truncation
from src.exceptions import ConvergenceError, DomainError
from src.matrix_core import residual
from src.mvop import family_for
from src.weight import (inner_product, iterated_weight, leibniz_residual, pearson, pearson_degree_residual,
                        phi_minus_psi_star, phi_star_conjugated, strong_pearson_residual,
                        summation_by_parts_residual, truncated_sum, weak_pearson_residual, weight,
                        weight_or_zero)


@pytest.mark.unit
def test_weight_two_by_two_closed_form(params_2):
    # (1/x!) [[1, x], [x, x^2 + 1]] for N=2, a=1, lambda=0
    for x in range(5):
        expected = np.array([[1.0, x], [x, x * x + 1.0]]) / math.factorial(x)
        assert np.allclose(weight(params_2, x), expected)


def test_weight_is_symmetric_positive_definite(grid_params):
    for x in range(6):
        W = weight(grid_params, x)
        assert np.allclose(W, W.T)
        assert np.all(np.linalg.eigvalsh(W) > 0)


def test_weight_domain(params_2):
    with pytest.raises(DomainError, match="x >= 0"):
        weight(params_2, -1)
    assert np.array_equal(weight_or_zero(params_2, -2), np.zeros((2, 2)))


def test_truncated_sum_geometric_series():
    result = truncated_sum(lambda k: np.eye(2) * 0.5 ** k, Truncation(eps=1e-14, max_terms=400))
    assert np.allclose(result.value, 2 * np.eye(2))
    assert 40 < result.terms < 60


def test_truncated_sum_with_two_leading_zero_terms():
    result = truncated_sum(lambda k: np.eye(1) * (k * (k - 1) * 0.5 ** k), Truncation())
    assert result.value[0, 0] == pytest.approx(4.0)


def test_truncated_sum_of_zero_terms_settles():
    result = truncated_sum(lambda k: np.zeros((2, 2)), Truncation())
    assert np.array_equal(result.value, np.zeros((2, 2)))
    assert result.terms == 3


def test_truncated_sum_raises_with_partial_sum():
    with pytest.raises(ConvergenceError) as info:
        truncated_sum(lambda k: np.eye(2), Truncation(eps=1e-14, max_terms=5), label="constant")
    assert info.value.terms == 5
    assert np.allclose(info.value.partial, 5 * np.eye(2))
    assert "constant" in str(info.value)


def test_truncation_validates_fields():
    with pytest.raises(DomainError, match="eps"):
        Truncation(eps=0.0)
    with pytest.raises(DomainError, match="max_terms"):
        Truncation(max_terms=0)


def test_inner_product_of_constants_is_h0(params_2, truncation):
    one = lambda x: np.eye(2)
    result = inner_product(one, one, params_2, truncation)
    assert np.allclose(result.value, math.e * np.array([[1.0, 1.0], [1.0, 3.0]]))


def test_strong_pearson(grid_params):
    for x in range(6):
        first, second = strong_pearson_residual(grid_params, x)
        assert first < 1e-10
        assert second < 1e-10


def test_pearson_degrees_and_conjugated_forms(grid_params):
    data = pearson(grid_params)
    assert pearson_degree_residual(grid_params, 2) < 1e-12
    for x in range(4):
        assert residual(phi_star_conjugated(grid_params, x), data.phi(x).T) < 1e-10
        assert residual(phi_minus_psi_star(grid_params, x), (data.phi(x) - data.psi(x)).T) < 1e-10


def test_weak_pearson_and_iteration(grid_params):
    for x in range(1, 6):
        assert weak_pearson_residual(grid_params, x) < 1e-10
    for x in range(6):
        assert residual(iterated_weight(grid_params, x), weight(grid_params, x)) < 1e-10


def test_weak_pearson_rejects_origin(params_2):
    with pytest.raises(DomainError, match="x >= 1"):
        weak_pearson_residual(params_2, 0)


def test_summation_by_parts_and_leibniz():
    F = lambda x: np.array([[x, 1.0], [0.0, x * x]])
    G = lambda x: np.array([[1.0, x], [2.0 * x, 3.0]])
    assert summation_by_parts_residual(F, G, 7) < 1e-12
    for x in range(5):
        assert leibniz_residual(F, G, x) < 1e-12


def test_first_polynomials_are_orthogonal(params_2, truncation):
    family = family_for(params_2)
    gram = inner_product(family.polynomial(0), family.polynomial(1), params_2, truncation)
    assert np.allclose(gram.value, 0.0, atol=1e-9)
