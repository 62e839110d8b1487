"""The Charlier weight W^(lam), truncated matrix inner products and the
Pearson data relating W^(lam) to W^(lam+1)."""
import logging

import numpy as np
from scipy.special import gammaln

from src.constants import CONSECUTIVE_SMALL_TERMS
from src.data_models import PearsonData, Truncation, TruncatedSum
from src.exceptions import ConvergenceError, DomainError
from src.matrix_core import ModelParams, inv, ipa_pow, ipa_star_pow, jfrak, residual


def weight(p: ModelParams, x):
    """W(x) = (a^x / x!) (I+A)^{x+lam} T (I+A*)^{x+lam} for integer x >= 0."""
    if x < 0:
        raise DomainError(f"The weight is defined for x >= 0, got {x}")
    scale = np.exp(x * np.log(p.a) - gammaln(x + 1))
    left = ipa_pow(p, x + p.lam)
    return scale * (left @ p.T @ left.T)


def weight_or_zero(p: ModelParams, x):
    """W(x), extended by zero to negative x."""
    if x < 0:
        return np.zeros((p.N, p.N))
    return weight(p, x)


def truncated_sum(term, t: Truncation, start=0, label="sum"):
    """Adds term(start), term(start+1), ... until the tail rule of t is met.

    Args:
        term (callable): k -> matrix.
        t (Truncation): Stopping rule.
        start (int): First index.
        label (str): Name used in log and error messages.

    Returns:
        TruncatedSum: The value and the number of terms used.
    """
    total = None
    peak = 0.0
    small_run = 0
    for count in range(t.max_terms):
        value = np.asarray(term(start + count), dtype=float)
        total = value.copy() if total is None else total + value
        size = float(np.max(np.abs(value)))
        peak = max(peak, size)
        scale = max(float(np.max(np.abs(total))), peak)
        if size <= t.eps * scale:
            small_run += 1
            if small_run >= CONSECUTIVE_SMALL_TERMS:
                logging.debug(f"{label} settled after {count + 1} terms")
                return TruncatedSum(value=total, terms=count + 1)
        else:
            small_run = 0
    logging.warning(f"{label} did not settle within {t.max_terms} terms")
    raise ConvergenceError(f"{label} did not settle within {t.max_terms} terms",
                           partial=total, terms=t.max_terms)


def inner_product(F, G, p: ModelParams, t: Truncation = None):
    """Truncated sum over x >= 0 of F(x) W(x) G(x)*."""
    t = t or Truncation()
    return truncated_sum(lambda x: F(x) @ weight(p, x) @ G(x).T, t, label="inner product")


def pearson(p: ModelParams):
    """Coefficients of Phi and Psi for d = 1 and c = -(N+1)/2."""
    I, J, a, lam, N = p.I, p.J, p.a, p.lam, p.N
    As = p.A.T
    inv_ipas = ipa_star_pow(p, -1)
    K2 = -0.5 * As @ inv_ipas
    K1 = 0.5 * (2 * J - a * As - (2 * lam + 1) * As @ inv_ipas) - 0.5 * (N + 1) * I
    T_next = p.shifted(1).T
    K0 = ipa_star_pow(p, -lam) @ inv(p.T) @ (I + p.A) @ T_next @ ipa_star_pow(p, lam + 1)
    J1 = 0.5 * (J - a * As - (N + 1 + lam) * I - (lam + 1) * As @ inv_ipas)
    return PearsonData(K2=K2, K1=K1, K0=K0, J1=J1, J0=K0.copy())


def phi_star_conjugated(p: ModelParams, x):
    """(a/2)(I+A)^{x+lam+1}(J(I+A*)+lam)(I+A)^{-x-lam}, equal to Phi(x)*."""
    middle = p.J @ (p.I + p.A.T) + p.lam * p.I
    return 0.5 * p.a * ipa_pow(p, x + p.lam + 1) @ middle @ ipa_pow(p, -x - p.lam)


def phi_minus_psi_star(p: ModelParams, x):
    """(x/2)(I+A)^{x+lam}(J+lam)(I+A)^{-x-lam}, equal to Phi(x)* - Psi(x)*."""
    return 0.5 * x * ipa_pow(p, x + p.lam) @ (p.J + p.lam * p.I) @ ipa_pow(p, -x - p.lam)


def strong_pearson_residual(p: ModelParams, x):
    """Residuals of W'(x) = W(x)Phi(x) and (W'.nabla)(x) = W(x)Psi(x), W' = W^(lam+1)."""
    data = pearson(p)
    up = p.shifted(1)
    W = weight(p, x)
    W_up = weight(up, x)
    first = residual(W_up, W @ data.phi(x))
    second = residual(W_up - weight_or_zero(up, x - 1), W @ data.psi(x))
    return first, second


def weak_pearson_residual(p: ModelParams, x):
    """Max of the residuals of (I+A)W(x-1) = W(x) B x, B = (a(I+A*))^{-1}, and
    of the symmetry J(x)W(x) = W(x)J(x)*."""
    if x < 1:
        raise DomainError(f"The weak Pearson relation is stated for x >= 1, got {x}")
    B = inv(p.a * (p.I + p.A.T))
    W = weight(p, x)
    pearson_part = residual((p.I + p.A) @ weight(p, x - 1), x * W @ B)
    Jx = jfrak(p, x)
    symmetry_part = residual(Jx @ W, W @ Jx.T)
    return max(pearson_part, symmetry_part)


def iterated_weight(p: ModelParams, x):
    """(I+A)^x W(0) a^x (I+A*)^x / x!, the weak Pearson relation iterated from 0."""
    scale = np.exp(x * np.log(p.a) - gammaln(x + 1))
    return scale * ipa_pow(p, x) @ weight(p, 0) @ ipa_star_pow(p, x)


def pearson_degree_residual(p: ModelParams, x):
    """Third difference of Phi and second difference of Psi at x, both zero."""
    data = pearson(p)
    third = data.phi(x + 3) - 3 * data.phi(x + 2) + 3 * data.phi(x + 1) - data.phi(x)
    second = data.psi(x + 2) - 2 * data.psi(x + 1) + data.psi(x)
    zero = np.zeros((p.N, p.N))
    return max(residual(third, zero), residual(second, zero))


def summation_by_parts_residual(F, G, upper):
    """sum_{x=0}^{upper} (G.Delta)(x)F(x) against its summed-by-parts form."""
    lhs = sum((G(x + 1) - G(x)) @ F(x) for x in range(upper + 1))
    rhs = (G(upper + 1) @ F(upper + 1) - G(0) @ F(0)
           - sum(G(x + 1) @ (F(x + 1) - F(x)) for x in range(upper + 1)))
    return residual(lhs, rhs)


def leibniz_residual(F, G, x):
    """Both discrete product rules for (FG).Delta at x."""
    lhs = F(x + 1) @ G(x + 1) - F(x) @ G(x)
    first = F(x + 1) @ (G(x + 1) - G(x)) + (F(x + 1) - F(x)) @ G(x)
    second = (F(x + 1) - F(x)) @ G(x + 1) + F(x) @ (G(x + 1) - G(x))
    return max(residual(lhs, first), residual(lhs, second))
