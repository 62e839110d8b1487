"""Monic matrix Charlier polynomials P_n^(lam).

Entries come from the xi coefficients (dual Hahn closed form) through
R_n(x) = L0 (I+A)^{-n-lam} P_n(x) (I+A)^{x+lam}. Norms, recurrence
coefficients and shift operators have closed forms; Rodrigues and a
Gram-Schmidt oracle give independent routes to the same polynomials.

Module level functions recompute everything. MVOPFamily keeps per-n caches
and is what the duality, operator and verification layers use.
"""
import logging
import math
from functools import lru_cache

import numpy as np
from scipy.linalg import solve
from scipy.special import binom, gammaln

from src.constants import (FAMILY_CACHE_SIZE, ORACLE_CONDITION_LIMIT, ORACLE_MAX_DEGREE, RODRIGUES_MAX_DEGREE,
                           VariableSide)
from src.data_models import DualHahnParams, Truncation
from src.exceptions import DomainError, OracleError, UsageError
from src.matrix_core import (ModelParams, abs_chain, build_params, conditioned_residual, inv, ipa_pow, ipa_star_pow,
                             matL, matL_inv, residual, script_A, script_A_pow)
from src.scalar_classical import charlier, dual_hahn, pochhammer
from src.weight import inner_product, pearson, truncated_sum, weight, weight_or_zero


class MatrixPolynomial:
    """Matrix polynomial with degree-ascending coefficients.

    The side fixes how a variable enters: SCALAR gives sum x^k A_k,
    LEFT_MATRIX gives sum M^k A_k and RIGHT_MATRIX gives sum A_k M^k.
    """

    def __init__(self, coeffs, side=VariableSide.SCALAR):
        if not coeffs:
            raise DomainError("A matrix polynomial needs at least one coefficient")
        self.coeffs = [np.asarray(c, dtype=float) for c in coeffs]
        self.side = side

    @property
    def degree(self):
        return len(self.coeffs) - 1

    @property
    def size(self):
        return self.coeffs[0].shape[0]

    def is_monic(self, tol=1e-9):
        return residual(self.coeffs[-1], np.eye(self.size)) <= tol

    def __call__(self, value):
        if self.side is VariableSide.SCALAR:
            if np.ndim(value) != 0:
                raise UsageError("A scalar-variable polynomial takes a scalar argument")
            result = self.coeffs[-1].copy()
            for c in reversed(self.coeffs[:-1]):
                result = value * result + c
            return result
        M = np.asarray(value, dtype=float)
        if M.shape != (self.size, self.size):
            raise UsageError(f"Matrix argument has shape {M.shape}, expected {(self.size, self.size)}")
        result = self.coeffs[-1].copy()
        for c in reversed(self.coeffs[:-1]):
            result = M @ result + c if self.side is VariableSide.LEFT_MATRIX else result @ M + c
        return result

    def __repr__(self):
        return f"MatrixPolynomial(degree={self.degree}, side={self.side.value}, size={self.size})"


def interpolate_coefficients(values):
    """Coefficients of the polynomial of degree len(values) - 1 through
    (0, values[0]), (1, values[1]), ...

    Args:
        values (list): Matrices at the integer nodes 0..deg.

    Returns:
        MatrixPolynomial: Scalar-variable polynomial.
    """
    stack = np.array([np.asarray(v, dtype=float) for v in values])
    deg = stack.shape[0] - 1
    nodes = np.arange(deg + 1, dtype=float)
    vander = np.vander(nodes, deg + 1, increasing=True)
    flat = solve(vander, stack.reshape(deg + 1, -1))
    return MatrixPolynomial(list(flat.reshape(stack.shape)), VariableSide.SCALAR)


def balance(*terms):
    """max|sum of terms| relative to max(1, largest max|term|)."""
    arrays = [np.asarray(t, dtype=float) for t in terms]
    total = sum(arrays)
    scale = max([1.0] + [float(np.max(np.abs(t))) for t in arrays])
    return float(np.max(np.abs(total))) / scale


# xi coefficients

def _xi_scale(p: ModelParams, j, k, n):
    """Sign and size of the prefactor of xi_{j,k,n}."""
    N, a, lam = p.N, p.a, p.lam
    log_scale = (0.5 * (gammaln(N - k + 1) - gammaln(N - j + 1))
                 + (n + 0.5 * (j - k)) * np.log(a)
                 + gammaln(lam + n + 1) + gammaln(N + lam - j + 1)
                 - gammaln(j) - gammaln(lam + 1) - gammaln(N + lam + n - j + 1))
    return (-1) ** (n + j - 1) * np.exp(log_scale)


def _xi_upper_branch(p: ModelParams, j, k, n):
    """Dual Hahn factor used when n + j >= N."""
    params = DualHahnParams(gamma=p.lam, delta=n + j - p.N, bigN=p.N - 1)
    return pochhammer(1 - p.N, k - 1) * dual_hahn(k - 1, p.N - j, params)


def _xi_lower_branch(p: ModelParams, j, k, n):
    """Dual Hahn factor used when n + j <= N."""
    params = DualHahnParams(gamma=p.lam, delta=p.N - n - j, bigN=n + j - 1)
    return pochhammer(1 - n - j, k - 1) * dual_hahn(k - 1, n, params)


def xi(p: ModelParams, j, k, n):
    """Coefficient xi_{j,k,n} of R_n(x), zero outside 1 <= j, k <= N or n + j < k."""
    if not (1 <= j <= p.N and 1 <= k <= p.N) or n < 0 or n + j - k < 0:
        return 0.0
    if n + j >= p.N:
        branch = _xi_upper_branch(p, j, k, n)
    else:
        branch = _xi_lower_branch(p, j, k, n)
    return float(_xi_scale(p, j, k, n) * branch)


def xi_branch_gap(p: ModelParams, j, k, n):
    """Relative gap between the two dual Hahn branches at n + j = N."""
    if n + j != p.N:
        raise DomainError(f"Both branches apply only when n + j = N, got n={n}, j={j}, N={p.N}")
    scale = _xi_scale(p, j, k, n)
    return residual(scale * _xi_upper_branch(p, j, k, n), scale * _xi_lower_branch(p, j, k, n))


def xi_table(p: ModelParams, n):
    """N x N array with xi_{j,k,n} at [j-1, k-1]."""
    table = np.zeros((p.N, p.N))
    for j in range(1, p.N + 1):
        for k in range(1, p.N + 1):
            table[j - 1, k - 1] = xi(p, j, k, n)
    return table


def xi_k_recursion_residual(p: ModelParams, j, n, table=None):
    """Largest relative residual of the three-term recursion of xi in k."""
    N, a, lam = p.N, p.a, p.lam
    table = xi_table(p, n) if table is None else table

    def phi(k):
        return table[j - 1, k - 1] if 1 <= k <= N else 0.0

    worst = 0.0
    for k in range(1, min(N, n + j) + 1):
        up = np.sqrt(a) * (k + lam) * np.sqrt(N - k) * phi(k + 1)
        mid = (j * lam - n * (N + 1 - j) - N - 1 + k * (N + j - lam + n + 2) - 2 * k * k) * phi(k)
        down = (n + j - k + 1) * (k - 1) * np.sqrt(N - k + 1) * phi(k - 1) / np.sqrt(a)
        worst = max(worst, balance(up, mid, down))
    return worst


def xi_j_recursion_residual(p: ModelParams, n, table=None):
    """Largest relative residual of the recursion in j for xi_{j,1,n}."""
    N, a, lam = p.N, p.a, p.lam
    table = xi_table(p, n) if table is None else table

    def psi(j):
        return table[j - 1, 0] if 1 <= j <= N else 0.0

    worst = 0.0
    for j in range(1, N + 1):
        up = psi(j + 1) * j * (N + lam - j) * (n + j) * np.sqrt(N - j) / np.sqrt(a)
        mid = psi(j) * ((n + j - 1) * (N + n + lam - j) * (N + n + lam - j + 1)
                        - n * (lam + n) * (N + lam + n) + j * (N - j) * (N + lam - j))
        down = psi(j - 1) * np.sqrt(a) * (N + n + lam - j) * (N + n + lam - j + 1) * np.sqrt(N - j + 1)
        worst = max(worst, balance(up, mid, down))
    return worst


def xi_endpoints(p: ModelParams, n):
    """Closed values of xi_{1,1,n} and xi_{N,1,n}."""
    N, a, lam = p.N, p.a, p.lam
    first = (-a) ** n * pochhammer(lam + 1, N - 1) / pochhammer(lam + n + 1, N - 1)
    last = (-1) ** (n + N - 1) * a ** (n + 0.5 * (N - 1)) / np.sqrt(math.factorial(N - 1))
    return first, last


# polynomial values

def r_eval(p: ModelParams, n, x, table=None):
    """R_n(x) with entries xi_{j,k,n} c_{n+j-k}(x)."""
    table = xi_table(p, n) if table is None else table
    R = np.zeros((p.N, p.N))
    for j in range(1, p.N + 1):
        for k in range(1, p.N + 1):
            degree = n + j - k
            if degree >= 0 and table[j - 1, k - 1] != 0.0:
                R[j - 1, k - 1] = table[j - 1, k - 1] * charlier(degree, p.a, x)
    return R


def p_eval(p: ModelParams, n, x, table=None):
    """P_n(x) = L(-n-lam)^{-1} R_n(x) L(x+lam)^{-1} L0."""
    if n < 0:
        raise DomainError(f"Degree must be nonnegative, got {n}")
    R = r_eval(p, n, x, table)
    return matL_inv(p, -n - p.lam) @ R @ matL_inv(p, x + p.lam) @ matL(p, 0)


def p_eval_bound(p: ModelParams, n, x, table=None):
    """|L(-n-lam)^{-1}| |R_n(x)| |L(x+lam)^{-1}| |L0|, the size of the terms behind p_eval."""
    R = r_eval(p, n, x, table)
    return abs_chain(matL_inv(p, -n - p.lam), R, matL_inv(p, x + p.lam), matL(p, 0))


def p_eval_or_zero(p: ModelParams, n, x, table=None):
    """P_n(x), with P_n = 0 for n < 0."""
    if n < 0:
        return np.zeros((p.N, p.N))
    return p_eval(p, n, x, table)


def p_at_zero(p: ModelParams, n):
    """(-a)^n L0^{-1} (I+A)^{n+lam} (I + A_{n+lam})^n (I+A)^{-lam} L0."""
    return ((-p.a) ** n * matL_inv(p, 0) @ ipa_pow(p, n + p.lam)
            @ script_A_pow(p, n + p.lam, n) @ ipa_pow(p, -p.lam) @ matL(p, 0))


def p_polynomial(p: ModelParams, n, table=None):
    """P_n as a scalar-variable MatrixPolynomial, interpolated on 0..n."""
    table = xi_table(p, n) if table is None else table
    return interpolate_coefficients([p_eval(p, n, x, table) for x in range(n + 1)])


# norms

def norm_d(p: ModelParams, n):
    """Diagonal D_n of the LDU factorisation of H_n."""
    N, a, lam = p.N, p.a, p.lam
    j = np.arange(1, N + 1)
    log_entries = (a + gammaln(n + 1) + n * np.log(a) + lam * np.log(a / 2) + gammaln(lam + n + 1)
                   - (gammaln(N + lam - j + 1 + n) - gammaln(N + lam - j + 1))
                   + gammaln(N + lam + n + 1) - gammaln(j) - gammaln(N + lam + n - j + 2))
    return np.diag(np.exp(log_entries))


def norm_d_via_lambda(p: ModelParams, n):
    """n! 2^n D_0^(lam+n) Lambda_n^{-1}, Lambda_n = prod_{m=1}^{n} (N + lam + m - J)."""
    j = np.arange(1, p.N + 1)
    lam_n = np.ones(p.N)
    for m in range(1, n + 1):
        lam_n *= p.N + p.lam + m - j
    return math.factorial(n) * 2.0 ** n * norm_d(p.shifted(n), 0) @ np.diag(1.0 / lam_n)


def norm_d_ratio(p: ModelParams, n):
    """Closed form of D_n D_{n-1}^{-1}; the zero matrix at n = 0."""
    N, a, lam = p.N, p.a, p.lam
    if n == 0:
        return np.zeros((N, N))
    j = np.arange(1, N + 1)
    return np.diag(n * a * (lam + n) * (N + lam + n) / ((N + lam + n - j) * (N + lam + n - j + 1)))


def norm_d_lambda_ratio(p: ModelParams, n):
    """D_n^(lam) (D_{n+1}^(lam-1))^{-1} and its closed form (N + lam - J)/(2(n+1))."""
    if p.lam < 1:
        raise DomainError(f"The lambda-lowering ratio needs lambda >= 1, got {p.lam}")
    computed = norm_d(p, n) @ inv(norm_d(p.shifted(-1), n + 1))
    closed = (p.N + p.lam) * p.I - p.J
    return computed, closed / (2 * (n + 1))


def norm_h(p: ModelParams, n, d=None):
    """H_n = L0^{-1}(I+A)^{n+lam} D_n (I+A*)^{n+lam} (L0*)^{-1}."""
    d = norm_d(p, n) if d is None else d
    left = matL_inv(p, 0) @ ipa_pow(p, n + p.lam)
    return left @ d @ left.T


def norm_h_from_shifts(p: ModelParams, n):
    """n! H_0^(lam+n) (G_1^(lam+n-1)*)^{-1} ... (G_n^(lam)*)^{-1}."""
    H = math.factorial(n) * norm_h(p.shifted(n), 0)
    for k in range(1, n + 1):
        H = H @ inv(shift_g(p.shifted(n - k), k).T)
    return H


def norm_recursion_step(h_prev, h_prev2, script, a):
    """Next square norm from the quadratic recursion with script = I + A.

    With h_prev2 None this is the n = 1 form. Works unchanged on 1 x 1 inputs.
    """
    S, St = script, script.T
    Si, Sti = inv(script), inv(script.T)
    h_inv = inv(h_prev)
    value = (a * a * S @ S @ h_prev @ St @ St
             - a * a * S @ h_prev @ St @ h_inv @ S @ h_prev @ St
             + a * S @ h_prev @ St)
    if h_prev2 is not None:
        value = value + S @ h_prev @ Sti @ inv(h_prev2) @ Si @ h_prev @ St
    return value


def nonlinear_norm_residual(p: ModelParams, n):
    """Residual of H_n against one step of the quadratic norm recursion."""
    if n < 1:
        raise DomainError(f"The norm recursion starts at n = 1, got {n}")
    h_prev2 = norm_h(p, n - 2) if n >= 2 else None
    predicted = norm_recursion_step(norm_h(p, n - 1), h_prev2, p.I + p.A, p.a)
    return residual(predicted, norm_h(p, n))


# recurrence coefficients

def rec_b(p: ModelParams, n):
    """B_n of x P_n = P_{n+1} + B_n P_n + C_n P_{n-1}."""
    I, A, a, m = p.I, p.A, p.a, n + p.lam
    middle = ((n + 1) * (I + A) @ script_A(p, m + 1) - n * script_A(p, m) @ (I + A)
              + I + A + (n / a) * I)
    return a * matL_inv(p, 0) @ ipa_pow(p, m) @ middle @ ipa_pow(p, -m) @ matL(p, 0)


def subleading_x1(p: ModelParams):
    """Coefficient of x^{n-1} in P_n^(lam) at n = 1, as a function of lam."""
    return (-p.a * matL_inv(p, 0) @ ipa_pow(p, p.lam + 1) @ script_A_pow(p, p.lam + 1, 1)
            @ ipa_pow(p, -p.lam) @ matL(p, 0))


def rec_b_from_subleading(p: ModelParams, n):
    """B_n = n X1(lam+n-1) - (n+1) X1(lam+n) + n."""
    value = -(n + 1) * subleading_x1(p.shifted(n)) + n * p.I
    if n >= 1:
        value = value + n * subleading_x1(p.shifted(n - 1))
    return value


def rec_b_from_norms(p: ModelParams, n):
    """B_n = a(I+A) H_n (I+A*) H_n^{-1} + H_n (I+A*)^{-1} H_{n-1}^{-1} (a(I+A))^{-1}."""
    H = norm_h(p, n)
    value = p.a * (p.I + p.A) @ H @ (p.I + p.A.T) @ inv(H)
    if n >= 1:
        value = value + H @ ipa_star_pow(p, -1) @ inv(norm_h(p, n - 1)) @ ipa_pow(p, -1) / p.a
    return value


def rec_c(p: ModelParams, n):
    """C_n = H_n H_{n-1}^{-1} in LDU form; zero at n = 0."""
    if n == 0:
        return np.zeros((p.N, p.N))
    m = n + p.lam
    return (matL_inv(p, 0) @ ipa_pow(p, m) @ norm_d(p, n) @ (p.I + p.A.T)
            @ inv(norm_d(p, n - 1)) @ ipa_pow(p, 1 - m) @ matL(p, 0))


# shift and difference operators

def shift_g(p: ModelParams, n):
    """G_n = -(n-1) K2* - J1*, the forward shift constant."""
    if n < 1:
        raise DomainError(f"G_n is defined for n >= 1, got {n}")
    data = pearson(p)
    G = -(n - 1) * data.K2.T - data.J1.T
    if abs(np.linalg.det(G)) < 1e-300:
        raise DomainError(f"G_{n} is singular for N={p.N}, a={p.a}, lambda={p.lam}")
    return G


def shift_g_diagonalized(p: ModelParams, n):
    """(1/2) L0^{-1}(I+A)^{n+lam}((N+lam+1) - J)(I+A)^{-n-lam} L0."""
    m = n + p.lam
    middle = (p.N + p.lam + 1) * p.I - p.J
    return 0.5 * matL_inv(p, 0) @ ipa_pow(p, m) @ middle @ ipa_pow(p, -m) @ matL(p, 0)


def apply_delta(F, x):
    return F(x + 1) - F(x)


def apply_nabla(F, x):
    return F(x) - F(x - 1)


def apply_s(p: ModelParams, F, x):
    """(F.S^(lam))(x) = -F(x)Phi(x)* + F(x-1)(Phi(x)* - Psi(x)*).

    Phi - Psi vanishes at x = 0, so F is never read at -1.
    """
    data = pearson(p)
    value = -F(x) @ data.phi(x).T
    if x != 0:
        value = value + F(x - 1) @ (data.phi(x) - data.psi(x)).T
    return value


def apply_delta_s(p: ModelParams, F, x):
    """F . Delta S^(lam)."""
    return apply_s(p, lambda y: apply_delta(F, y), x)


def apply_s_delta(p: ModelParams, F, x):
    """F . S^(lam-1) Delta."""
    lower = p.shifted(-1)
    return apply_delta(lambda y: apply_s(lower, F, y), x)


def apply_dfrak(p: ModelParams, F, x):
    """(F.D)(x) = a F(x+1)(I+A) - F(x)(J + (x+lam)(I+A)^{-1}) + x F(x-1)(I+A)^{-1}."""
    inv_ipa = ipa_pow(p, -1)
    value = p.a * F(x + 1) @ (p.I + p.A) - F(x) @ (p.J + (x + p.lam) * inv_ipa)
    if x != 0:
        value = value + x * F(x - 1) @ inv_ipa
    return value


def gamma_n(p: ModelParams, n):
    """Eigenvalue a(I+A) - J - (n+lam)(I+A)^{-1} of the second-order operator."""
    return p.a * (p.I + p.A) - p.J - (n + p.lam) * ipa_pow(p, -1)


def darboux_residual(p: ModelParams, n, x, family=None):
    """2(P_n.Delta S - P_n.S Delta) against (a - N - 2 lam)P_n - P_n.D at x."""
    if p.lam < 1:
        raise DomainError(f"The Darboux relation needs lambda >= 1, got {p.lam}")
    family = family or family_for(p)
    P = family.polynomial(n)
    lhs = 2 * (apply_delta_s(p, P, x) - apply_s_delta(p, P, x))
    rhs = (p.a - p.N - 2 * p.lam) * P(x) - apply_dfrak(p, P, x)
    return residual(lhs, rhs)


# difference equations for R_n and the mixed equation for P_n

def r_difference_residual(p: ModelParams, n, x, table=None):
    """Residual of the three-term equation in x satisfied by R_n."""
    table = xi_table(p, n) if table is None else table
    I, J, A, a, lam = p.I, p.J, p.A, p.a, p.lam
    R = lambda y: r_eval(p, n, y, table)
    top = J @ (I + A.T) + lam * I
    lhs = n * ((p.N + lam + 1) * I - J) @ R(x)
    rhs = (-a * R(x + 1) @ top + R(x) @ (a * (I + A) @ top + x * (J + lam * I))
           - x * R(x - 1) @ (I + A) @ (J + lam * I))
    return residual(lhs, rhs)


def r_zero_recursion_residual(p: ModelParams, n):
    """R_n(0) against -a(I + A_{n+lam}) R_{n-1}^(lam+1)(0) and (-a)^n (I + A_{n+lam})^n L0."""
    if n < 1:
        raise DomainError(f"The R(0) recursion starts at n = 1, got {n}")
    R0 = r_eval(p, n, 0)
    step = -p.a * script_A_pow(p, n + p.lam, 1) @ r_eval(p.shifted(1), n - 1, 0)
    closed = (-p.a) ** n * script_A_pow(p, n + p.lam, n) @ matL(p, 0)
    return max(residual(R0, step), residual(R0, closed))


def mixed_difference_residual(p: ModelParams, n, x):
    """Residuals of the mixed-sided equation for P_n and of its R_n form, n >= 1."""
    if n < 1:
        raise DomainError(f"The mixed difference equation needs n >= 1, got {n}")
    a = p.a
    S, Si = p.I + p.A, ipa_pow(p, -1)
    St_inv = ipa_star_pow(p, -1)
    H, H_prev = norm_h(p, n), norm_h(p, n - 1)
    H_inv = inv(H)
    P = lambda y: p_eval(p, n, y)
    middle = H @ St_inv @ St_inv @ inv(H_prev) @ Si / (a * a) - (x / a) * H @ St_inv @ H_inv - S
    p_terms = [P(x + 1) @ S, middle @ P(x)]
    if x != 0:
        p_terms.append((x / a) * H @ St_inv @ H_inv @ S @ P(x - 1) @ Si)

    D, D_prev = norm_d(p, n), norm_d(p, n - 1)
    D_inv = inv(D)
    table = xi_table(p, n)
    R = lambda y: r_eval(p, n, y, table)
    r_middle = D @ St_inv @ inv(D_prev) / (a * a) - (x / a) * D @ St_inv @ D_inv - S
    r_terms = [R(x + 1), r_middle @ R(x)]
    if x != 0:
        r_terms.append((x / a) * D @ St_inv @ D_inv @ S @ R(x - 1))
    return max(balance(*p_terms), balance(*r_terms))


# Rodrigues formula

def rodrigues_eval(p: ModelParams, n, x):
    """(-1)^n (G_1^(lam+n-1) ... G_n^(lam))^{-1} (W^(lam+n).nabla^n)(x) W^(lam)(x)^{-1}."""
    if n > RODRIGUES_MAX_DEGREE:
        raise DomainError(f"Rodrigues evaluation is limited to n <= {RODRIGUES_MAX_DEGREE}, got {n}")
    if x < 0:
        raise DomainError(f"Rodrigues evaluation needs x >= 0, got {x}")
    top = p.shifted(n)
    differenced = sum((-1) ** k * binom(n, k) * weight_or_zero(top, x - k) for k in range(n + 1))
    chain = p.I
    for k in range(1, n + 1):
        chain = chain @ shift_g(p.shifted(n - k), k)
    return (-1) ** n * solve(chain, differenced) @ inv(weight(p, x))


# Gram-Schmidt oracle

def _support_length(p: ModelParams, degree, t: Truncation):
    """Number of support points after which x^degree W(x) is below the tail rule."""
    found = truncated_sum(lambda x: (1.0 + x) ** degree * weight(p, x), t, label="oracle support")
    return found.terms


def gram_schmidt_oracle(p: ModelParams, n_max, t: Truncation = None):
    """Monic polynomials of degree 0..n_max orthogonalized against the
    truncated inner product by modified Gram-Schmidt on monomials.

    Args:
        p (ModelParams): Model.
        n_max (int): Highest degree, at most ORACLE_MAX_DEGREE.
        t (Truncation): Stopping rule fixing the support length.

    Returns:
        list: MatrixPolynomial objects in degree order, scalar variable.

    Raises:
        OracleError: When a square norm has condition number above the limit.
    """
    if n_max > ORACLE_MAX_DEGREE:
        raise DomainError(f"The oracle is limited to degree {ORACLE_MAX_DEGREE}, got {n_max}")
    t = t or Truncation()
    support = np.arange(_support_length(p, 2 * n_max, t), dtype=float)
    weights = np.array([weight(p, int(x)) for x in support])
    N = p.N

    def inner(u, v):
        return np.einsum("xij,xjk,xlk->il", u, weights, v)

    basis, values, norms = [], [], []
    for n in range(n_max + 1):
        coeffs = [np.zeros((N, N)) for _ in range(n)] + [np.eye(N)]
        current = np.array([x ** n * np.eye(N) for x in support])
        for m in range(n):
            K = solve(norms[m], inner(current, values[m]).T).T
            current = current - np.einsum("ij,xjk->xik", K, values[m])
            for k, c in enumerate(basis[m].coeffs):
                coeffs[k] = coeffs[k] - K @ c
        H = inner(current, current)
        condition = np.linalg.cond(H)
        if condition > ORACLE_CONDITION_LIMIT:
            logging.warning(f"Oracle square norm at degree {n} has condition {condition:.3e}")
            raise OracleError(f"Gram matrix at degree {n} is ill-conditioned (condition {condition:.3e})")
        basis.append(MatrixPolynomial(coeffs, VariableSide.SCALAR))
        values.append(current)
        norms.append(H)
    logging.debug(f"Oracle built degrees 0..{n_max} on {len(support)} support points")
    return basis


# cached family

class MVOPFamily:
    """Per-n caches of the xi table, D_n, H_n, B_n, C_n and P_n(0) for one model.

    Caches fill lazily on first use; values are those of the module functions.
    """

    CACHED = ("xi", "norm_d", "norm_h", "norm_h_inv", "rec_b", "rec_c", "p_at_zero", "p_at_zero_inv", "shift_g")

    def __init__(self, params: ModelParams):
        self.params = params
        self._caches = {name: {} for name in self.CACHED}
        self._hits = {name: 0 for name in self.CACHED}
        self._misses = {name: 0 for name in self.CACHED}
        logging.debug(f"Created MVOP family for N={params.N}, a={params.a}, lambda={params.lam}")

    def _cached(self, name, n, compute):
        cache = self._caches[name]
        if n in cache:
            self._hits[name] += 1
            return cache[n]
        self._misses[name] += 1
        value = compute()
        cache[n] = value
        return value

    def cache_info(self):
        return {name: {"hits": self._hits[name], "misses": self._misses[name],
                       "size": len(self._caches[name])} for name in self.CACHED}

    def clear_cache(self):
        for name in self.CACHED:
            self._caches[name].clear()
            self._hits[name] = 0
            self._misses[name] = 0

    def xi_table(self, n):
        return self._cached("xi", n, lambda: xi_table(self.params, n))

    def norm_d(self, n):
        return self._cached("norm_d", n, lambda: norm_d(self.params, n))

    def norm_h(self, n):
        return self._cached("norm_h", n, lambda: norm_h(self.params, n, self.norm_d(n)))

    def norm_h_inv(self, n):
        return self._cached("norm_h_inv", n, lambda: inv(self.norm_h(n)))

    def rec_b(self, n):
        return self._cached("rec_b", n, lambda: rec_b(self.params, n))

    def rec_c(self, n):
        return self._cached("rec_c", n, lambda: rec_c(self.params, n))

    def p_at_zero(self, n):
        return self._cached("p_at_zero", n, lambda: p_at_zero(self.params, n))

    def p_at_zero_inv(self, n):
        return self._cached("p_at_zero_inv", n, lambda: inv(self.p_at_zero(n)))

    def shift_g(self, n):
        return self._cached("shift_g", n, lambda: shift_g(self.params, n))

    def r_eval(self, n, x):
        return r_eval(self.params, n, x, self.xi_table(n))

    def p_eval(self, n, x):
        if n < 0:
            return np.zeros((self.params.N, self.params.N))
        return p_eval(self.params, n, x, self.xi_table(n))

    def p_bound(self, n, x):
        if n < 0:
            return np.zeros((self.params.N, self.params.N))
        return p_eval_bound(self.params, n, x, self.xi_table(n))

    def polynomial(self, n):
        """P_n as a callable x -> P_n(x)."""
        return lambda x: self.p_eval(n, x)


@lru_cache(maxsize=FAMILY_CACHE_SIZE)
def _family_for_key(key):
    N, a, lam, gauge = key
    return MVOPFamily(build_params(N, a, lam, gauge=gauge))


def family_for(p: ModelParams):
    """Shared MVOPFamily for the model with the same (N, a, lam, gauge).

    At most FAMILY_CACHE_SIZE models are kept, least recently used first out.
    """
    return _family_for_key(p.key)


# residuals of the structural identities

def two_by_two_display(p: ModelParams, n, x):
    """(-a)^n c_n(x) I + Omega_1(n) c_{n-1}(x) + Omega_2(n) c_{n-2}(x) for N = 2."""
    if p.N != 2:
        raise DomainError(f"The closed 2 x 2 form needs N = 2, got {p.N}")
    a, lam, r = p.a, p.lam, np.sqrt(p.a)

    def c(d):
        return charlier(d, a, x) if d >= 0 else 0.0

    scale = (-1) ** n * n * a ** (n - 1) / ((lam + n + 1) * r)
    omega_1 = scale * np.array([
        [(1 - a - lam - n) * r, a],
        [-(a * a + a * lam + a * n + lam * lam + 2 * lam * n + n * n - 2 * a - lam - n), (a + lam + n) * r]])
    omega_2 = scale * np.array([[(n - 1) * r, 0.0], [(n - 1) * (a + lam + n), 0.0]])
    return (-a) ** n * c(n) * p.I + omega_1 * c(n - 1) + omega_2 * c(n - 2)


def two_by_two_at_zero(p: ModelParams, n):
    """Closed P_n(0) for N = 2 and n >= 1."""
    if p.N != 2 or n < 1:
        raise DomainError(f"The closed 2 x 2 value at zero needs N = 2 and n >= 1, got N={p.N}, n={n}")
    a, lam, r = p.a, p.lam, np.sqrt(p.a)
    scale = a ** (n - 1) * n * (-1) ** n / (lam + n + 1)
    return scale * np.array([
        [(-lam * n + a * lam + a) / n, r],
        [-(a * a + a * lam + lam * lam - a + lam * n) / r, (2 * a * n + lam * n + n * n + a * lam + a) / n]])


def norm_d0_closed(p: ModelParams):
    """e^a (a/2)^lam lam! binom(N + lam, j - 1) on the diagonal."""
    j = np.arange(1, p.N + 1)
    return np.diag(np.exp(p.a + p.lam * np.log(p.a / 2) + gammaln(p.lam + 1)) * binom(p.N + p.lam, j - 1))


def recurrence_residual(p: ModelParams, n, x):
    """x P_n(x) against P_{n+1}(x) + B_n P_n(x) + C_n P_{n-1}(x).

    Measured against the size of the three terms and of the products inside
    each P_k(x), see p_eval_bound.
    """
    family = family_for(p)
    B, C = family.rec_b(n), family.rec_c(n)
    rhs = family.p_eval(n + 1, x) + B @ family.p_eval(n, x) + C @ family.p_eval(n - 1, x)
    current = family.p_bound(n, x)
    magnitude = np.max(abs(x) * current + family.p_bound(n + 1, x) + abs_chain(B, current)
                       + abs_chain(C, family.p_bound(n - 1, x)))
    return conditioned_residual(x * family.p_eval(n, x), rhs, magnitude)


def rec_b_symmetry_residual(p: ModelParams, n):
    """B_n H_n against H_n B_n*."""
    family = family_for(p)
    B, H = family.rec_b(n), family.norm_h(n)
    return residual(B @ H, H @ B.T)


def rec_b_routes_residual(p: ModelParams, n):
    """Closed B_n against the subleading-coefficient and the norm routes."""
    B = rec_b(p, n)
    return max(residual(B, rec_b_from_subleading(p, n)), residual(B, rec_b_from_norms(p, n)))


def rec_c_residual(p: ModelParams, n):
    """LDU form of C_n against H_n H_{n-1}^{-1}."""
    if n == 0:
        return float(np.max(np.abs(rec_c(p, 0))))
    family = family_for(p)
    return residual(family.rec_c(n), family.norm_h(n) @ family.norm_h_inv(n - 1))


def norm_d_routes_residual(p: ModelParams, n):
    """D_n against n! 2^n D_0^(lam+n) Lambda_n^{-1}, and D_n D_{n-1}^{-1} against its closed ratio."""
    D = norm_d(p, n)
    worst = residual(D, norm_d_via_lambda(p, n))
    if n >= 1:
        worst = max(worst, residual(D @ inv(norm_d(p, n - 1)), norm_d_ratio(p, n)))
    if n == 0:
        worst = max(worst, residual(D, norm_d0_closed(p)))
    if p.lam >= 1:
        computed, closed = norm_d_lambda_ratio(p, n)
        worst = max(worst, residual(computed, closed))
    return worst


def orthogonality_residual(p: ModelParams, n, m, t: Truncation = None):
    """max|<P_n, P_m> - delta_{n,m} H_n| / max|H_n|."""
    family = family_for(p)
    gram = inner_product(family.polynomial(n), family.polynomial(m), p, t).value
    H = family.norm_h(n)
    target = H if n == m else np.zeros_like(H)
    return float(np.max(np.abs(gram - target))) / float(np.max(np.abs(H)))


def shift_residuals(p: ModelParams, n, x):
    """Backward shift P_n.Delta = n P_{n-1}^(lam+1) and, for n >= 1,
    forward shift P_{n-1}^(lam+1).S^(lam) = G_n P_n."""
    family = family_for(p)
    upper = family_for(p.shifted(1))
    backward = residual(apply_delta(family.polynomial(n), x), n * upper.p_eval(n - 1, x))
    if n == 0:
        return backward, 0.0
    forward = residual(apply_s(p, upper.polynomial(n - 1), x), family.shift_g(n) @ family.p_eval(n, x))
    return backward, forward


def shift_g_routes_residual(p: ModelParams, n):
    return residual(shift_g(p, n), shift_g_diagonalized(p, n))


def delta_s_adjoint_residual(p: ModelParams, n, m, t: Truncation = None):
    """<P_n.Delta, P_m^(lam+1)> at lam+1 against <P_n, P_m^(lam+1).S^(lam)> at lam."""
    F = family_for(p).polynomial(n)
    G = family_for(p.shifted(1)).polynomial(m)
    lhs = inner_product(lambda x: apply_delta(F, x), G, p.shifted(1), t).value
    rhs = inner_product(F, lambda x: apply_s(p, G, x), p, t).value
    return residual(lhs, rhs)


def eigen_residuals(p: ModelParams, n, x):
    """P_n.Dfrak = Gamma_n P_n, P_n.Delta S = n G_n P_n and, for lam >= 1,
    P_n.S^(lam-1) Delta = (n+1) G_{n+1}^(lam-1) P_n.

    Returns:
        dict: relation name -> residual.
    """
    family = family_for(p)
    P = family.polynomial(n)
    value = P(x)
    result = {"dfrak": residual(apply_dfrak(p, P, x), gamma_n(p, n) @ value)}
    eigen = n * family.shift_g(n) if n >= 1 else np.zeros((p.N, p.N))
    result["delta_s"] = residual(apply_delta_s(p, P, x), eigen @ value)
    if p.lam >= 1:
        lower = family_for(p.shifted(-1))
        result["s_delta"] = residual(apply_s_delta(p, P, x), (n + 1) * lower.shift_g(n + 1) @ value)
    return result


def rodrigues_residual(p: ModelParams, n, x):
    return residual(rodrigues_eval(p, n, x), family_for(p).p_eval(n, x))


def norm_chain_residual(p: ModelParams, n):
    """n! H_0^(lam+n) (G_1*)^{-1} ... (G_n*)^{-1} against the LDU form of H_n."""
    return residual(norm_h_from_shifts(p, n), norm_h(p, n))


def oracle_residual(p: ModelParams, n_max, t: Truncation = None):
    """Largest coefficientwise gap between oracle and interpolated polynomials, relative per degree."""
    oracle = gram_schmidt_oracle(p, n_max, t)
    family = family_for(p)
    worst = 0.0
    for n, poly in enumerate(oracle):
        explicit = p_polynomial(p, n, family.xi_table(n))
        scale = max(1.0, max(float(np.max(np.abs(c))) for c in explicit.coeffs))
        gap = max(float(np.max(np.abs(c - e))) for c, e in zip(poly.coeffs, explicit.coeffs))
        worst = max(worst, gap / scale)
    return worst


def p_at_zero_residual(p: ModelParams, n):
    """Closed P_n(0) against P_n evaluated at 0."""
    return residual(p_at_zero(p, n), family_for(p).p_eval(n, 0))


def gauge_residual(p: ModelParams, n, x, gauge=3.0):
    """Largest change of P_n(x), H_n and B_n when mu is rescaled by gauge."""
    other = family_for(build_params(p.N, p.a, p.lam, gauge=p.gauge * gauge))
    family = family_for(p)
    return max(residual(family.p_eval(n, x), other.p_eval(n, x)),
               residual(family.norm_h(n), other.norm_h(n)),
               residual(family.rec_b(n), other.rec_b(n)))
