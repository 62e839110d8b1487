"""Dual families of the matrix Charlier polynomials.

Each family i = 1, 2, 3 comes from a second-order operator in x
(Dfrak, Delta S^(lam), S^(lam-1) Delta) written as
eta F1(x) + F0(x) + eta^{-1} F_{-1}(x). With the normalisation
M1(0) = M2(0) = I the dual polynomials satisfy

    P_n(x) = P_n(0) Q_x(rho(n)) Upsilon(x),
    rho(n) Q_x = Q_{x+1} + Q_x Y_x + Q_{x-1} Z_x,

with Upsilon(x) = F1(0)^{-1} ... F1(x-1)^{-1}. Q_x is a left-variable
matrix polynomial. Its values at rho(n) come from the same recurrence
written for V_x = Q_x Upsilon(x) = P_n(0)^{-1} P_n(x),

    rho(n) V_x = V_{x+1} F1(x) + V_x F0(x) + V_{x-1} F_{-1}(x),

which needs no Upsilon at all. The residuals compare against the size of
the terms each route combines (abs_chain), since Upsilon and Q_x grow like
x!/a^x while V_x stays of moderate size.
"""
import logging
from functools import lru_cache

import numpy as np
from scipy.linalg import solve
from scipy.special import gammaln

from src.constants import DEFAULT_DUAL_MAX_TERMS, DUAL_CACHE_SIZE, VariableSide
from src.data_models import Truncation
from src.exceptions import DomainError, UsageError
from src.matrix_core import (ModelParams, abs_chain, block_vandermonde_det, block_vandermonde_formula, build_params,
                             conditioned_residual, inv, ipa_pow, ipa_star_pow, jfrak, matL, matL_inv, residual,
                             script_A, script_A_pow)
from src.mvop import MatrixPolynomial, family_for, gamma_n
from src.operators import (LeftDiffOp, RightDiffOp, apply_left, apply_right, dfrak_op, delta_s_op,
                           ladder_m, ladder_m_dagger, s_delta_op)
from src.weight import truncated_sum, weight

FAMILIES = (1, 2, 3)


def eval_matrix_poly(q: MatrixPolynomial, M):
    """sum_k M^k A_k for a left-variable polynomial, Horner from the left."""
    if q.side is not VariableSide.LEFT_MATRIX:
        raise UsageError(f"eval_matrix_poly needs a left-variable polynomial, got {q.side.value}")
    return q(M)


def _x_factor(p: ModelParams, n):
    """A_{n+lam}(I + A_{n+lam})^{-1}."""
    return script_A(p, n + p.lam) @ script_A_pow(p, n + p.lam, -1)


def _conjugate_lam(p: ModelParams, middle):
    """L0^{-1}(I+A)^lam middle (I+A)^{-lam} L0."""
    return matL_inv(p, 0) @ ipa_pow(p, p.lam) @ middle @ ipa_pow(p, -p.lam) @ matL(p, 0)


class DualFamily:
    """Dual family i for the model p.

    Upsilon(x), its inverse and the recurrence-built Q_x are cached per x.

    Attributes:
        params (ModelParams): The model.
        index (int): 1 for Dfrak, 2 for Delta S^(lam), 3 for S^(lam-1) Delta.
        mvop (MVOPFamily): Cached polynomial data for the model.
    """

    def __init__(self, p: ModelParams, index):
        if index not in FAMILIES:
            raise DomainError(f"Dual family index must be 1, 2 or 3, got {index}")
        if index == 3 and p.lam < 1:
            raise DomainError("Dual family 3 needs lambda >= 1")
        self.params = p
        self.index = index
        self.mvop = family_for(p)
        self._op = self.operator()
        self._polys = {}
        self._scaled_polys = []
        self._scaled = {}
        self._raising_inv = {}
        self._upsilon, self._upsilon_bound = [p.I], [p.I]
        self._upsilon_inv, self._upsilon_inv_bound = [p.I], [p.I]
        logging.debug(f"Dual family {index} for N={p.N}, a={p.a}, lambda={p.lam}")

    def __repr__(self):
        p = self.params
        return f"DualFamily(index={self.index}, N={p.N}, a={p.a}, lam={p.lam})"

    def operator(self) -> RightDiffOp:
        p = self.params
        if self.index == 1:
            return dfrak_op(p)
        if self.index == 2:
            return delta_s_op(p)
        return s_delta_op(p)

    def eigen_matrix(self, n):
        """Lambda_n with P_n . D_i = Lambda_n P_n."""
        p = self.params
        if self.index == 1:
            return gamma_n(p, n)
        if self.index == 2:
            return n * self.mvop.shift_g(n) if n >= 1 else np.zeros((p.N, p.N))
        return (n + 1) * family_for(p.shifted(-1)).shift_g(n + 1)

    def raising(self, x):
        """F1(x), the eta coefficient of the generating operator."""
        return self._op.coefficient(1, x)

    def middle(self, x):
        return self._op.coefficient(0, x)

    def lowering(self, x):
        """F_{-1}(x), zero at x = 0."""
        return self._op.coefficient(-1, x)

    def rho(self, n):
        """Closed form of rho_i(n)."""
        p = self.params
        X = n * _x_factor(p, n)
        if self.index == 1:
            middle = (p.a - n - p.lam) * p.I - p.J + X
        elif self.index == 2:
            middle = 0.5 * n * ((p.N + p.lam + 1) * p.I - p.J + X)
        else:
            middle = 0.5 * (n + 1) * ((p.N + p.lam) * p.I - p.J + X)
        return _conjugate_lam(p, middle)

    def rho_by_conjugation(self, n):
        """P_n(0)^{-1} Lambda_n P_n(0)."""
        P0 = self.mvop.p_at_zero(n)
        return solve(P0, self.eigen_matrix(n) @ P0)

    def leading_diagonal(self):
        """T with rho_i(n) similar to n T + constant + strictly upper triangular."""
        p = self.params
        j = np.arange(1, p.N + 1)
        if self.index == 1:
            return -p.I
        if self.index == 2:
            return np.diag((p.N + p.lam + 1 - j) / 2.0)
        return np.diag((p.N + p.lam - j) / 2.0)

    def upsilon(self, x):
        """Closed form of Upsilon_i(x)."""
        p = self.params
        if x < 0:
            raise DomainError(f"Upsilon is defined for x >= 0, got {x}")
        if self.index == 1:
            return p.a ** (-x) * ipa_pow(p, -x)
        shift = p.lam if self.index == 2 else p.lam - 1
        middle = p.J @ (p.I + p.A.T) + shift * p.I
        return ((-2.0 / p.a) ** x * ipa_pow(p, p.lam) @ np.linalg.matrix_power(inv(middle), x)
                @ ipa_pow(p, -x - p.lam))

    def raising_inv(self, x):
        """F1(x)^{-1}; F1 must be invertible on x >= 0."""
        if x not in self._raising_inv:
            raising = self.raising(x)
            if abs(np.linalg.det(raising)) < 1e-300:
                raise DomainError(f"Raising coefficient of dual family {self.index} is singular at x={x}")
            self._raising_inv[x] = inv(raising)
        return self._raising_inv[x]

    def upsilon_product(self, x):
        """F1(0)^{-1} ... F1(x-1)^{-1}."""
        if x < 0:
            raise DomainError(f"Upsilon is defined for x >= 0, got {x}")
        for y in range(len(self._upsilon), x + 1):
            self._upsilon.append(self._upsilon[y - 1] @ self.raising_inv(y - 1))
            self._upsilon_bound.append(abs_chain(self._upsilon_bound[y - 1], self.raising_inv(y - 1)))
        return self._upsilon[x]

    def upsilon_inv(self, x):
        """F1(x-1) ... F1(0), the inverse of upsilon_product without a matrix inversion."""
        if x < 0:
            raise DomainError(f"Upsilon is defined for x >= 0, got {x}")
        for y in range(len(self._upsilon_inv), x + 1):
            self._upsilon_inv.append(self.raising(y - 1) @ self._upsilon_inv[y - 1])
            self._upsilon_inv_bound.append(abs_chain(self.raising(y - 1), self._upsilon_inv_bound[y - 1]))
        return self._upsilon_inv[x]

    def upsilon_bound(self, x):
        """|F1(0)^{-1}| ... |F1(x-1)^{-1}|."""
        self.upsilon_product(x)
        return self._upsilon_bound[x]

    def upsilon_inv_bound(self, x):
        """|F1(x-1)| ... |F1(0)|."""
        self.upsilon_inv(x)
        return self._upsilon_inv_bound[x]

    def recurrence_coeffs(self, x):
        """(Y_x, Z_x) with Z_0 = 0."""
        p = self.params
        Y = self.upsilon_product(x) @ self.middle(x) @ self.upsilon_inv(x)
        if x == 0:
            return Y, np.zeros((p.N, p.N))
        Z = self.upsilon_product(x - 1) @ self.lowering(x) @ self.upsilon_inv(x)
        return Y, Z

    def scaled_eval(self, x, n):
        """V_x(n) = P_n(0)^{-1} P_n(x) = Q_x(rho(n)) Upsilon(x); zero for x < 0."""
        p = self.params
        if x < 0:
            return np.zeros((p.N, p.N))
        return solve(self.mvop.p_at_zero(n), self.mvop.p_eval(n, x))

    def _scaled_run(self, n, x):
        """Values and running bounds of rho V_y = V_{y+1} F1(y) + V_y F0(y) + V_{y-1} F_{-1}(y)."""
        p = self.params
        values, bounds = self._scaled.setdefault(n, ([p.I], [p.I]))
        rho_n = self.rho(n)
        for y in range(len(values), x + 1):
            z = y - 1
            middle = self.middle(z)
            step = rho_n @ values[z] - values[z] @ middle
            step_bound = abs_chain(rho_n, bounds[z]) + abs_chain(bounds[z], middle)
            if z >= 1:
                lowering = self.lowering(z)
                step = step - values[z - 1] @ lowering
                step_bound = step_bound + abs_chain(bounds[z - 1], lowering)
            values.append(step @ self.raising_inv(z))
            bounds.append(abs_chain(step_bound, self.raising_inv(z)))
        return values[x], bounds[x]

    def scaled_from_recurrence(self, x, n):
        """V_x(n) from the dual recurrence written in the scaled gauge, started at V_0 = I."""
        p = self.params
        if x < 0:
            return np.zeros((p.N, p.N))
        return self._scaled_run(n, x)[0]

    def scaled_bound(self, x, n):
        """Entrywise bound on the terms summed by scaled_from_recurrence."""
        p = self.params
        if x < 0:
            return np.zeros((p.N, p.N))
        return self._scaled_run(n, x)[1]

    def q_eval(self, x, n):
        """Q_x(rho(n)) = P_n(0)^{-1} P_n(x) Upsilon(x)^{-1}; zero for x < 0."""
        p = self.params
        if x < 0:
            return np.zeros((p.N, p.N))
        return self.scaled_eval(x, n) @ self.upsilon_inv(x)

    def q_bound(self, x, n):
        """Entrywise size of the products behind q_eval, zero for x < 0."""
        p = self.params
        if x < 0:
            return np.zeros((p.N, p.N))
        mvop = self.mvop
        P0_inv = mvop.p_at_zero_inv(n)
        solved = abs_chain(P0_inv, mvop.p_bound(n, x)) + abs_chain(P0_inv, mvop.p_at_zero(n), self.scaled_eval(x, n))
        return abs_chain(solved, self.upsilon_inv_bound(x))

    def scaled_matrix_poly(self, x):
        """Left-variable V_x with V_x(rho(n)) = Q_x(rho(n)) Upsilon(x), leading coefficient Upsilon(x)."""
        if x < 0:
            raise DomainError(f"Dual polynomial degree must be nonnegative, got {x}")
        N = self.params.N
        if not self._scaled_polys:
            self._scaled_polys.append([self.params.I])
        for y in range(len(self._scaled_polys), x + 1):
            z = y - 1
            current = self._scaled_polys[z]
            coeffs = [np.zeros((N, N))] + [c.copy() for c in current]
            middle = self.middle(z)
            for k, c in enumerate(current):
                coeffs[k] = coeffs[k] - c @ middle
            if z >= 1:
                lowering = self.lowering(z)
                for k, c in enumerate(self._scaled_polys[z - 1]):
                    coeffs[k] = coeffs[k] - c @ lowering
            self._scaled_polys.append([c @ self.raising_inv(z) for c in coeffs])
        return MatrixPolynomial(self._scaled_polys[x], VariableSide.LEFT_MATRIX)

    def q_matrix_poly(self, x):
        """Monic left-variable Q_x of degree x, the scaled polynomial times Upsilon(x)^{-1}."""
        if x not in self._polys:
            back = self.upsilon_inv(x)
            coeffs = [c @ back for c in self.scaled_matrix_poly(x).coeffs]
            coeffs[-1] = self.params.I.copy()
            self._polys[x] = MatrixPolynomial(coeffs, VariableSide.LEFT_MATRIX)
        return self._polys[x]

    def q_from_recurrence(self, x, n):
        """Q_x(rho(n)) from the dual recurrence."""
        return self.scaled_from_recurrence(x, n) @ self.upsilon_inv(x)

    def q_recurrence_bound(self, x, n):
        return abs_chain(self.scaled_bound(x, n), self.upsilon_inv_bound(x))

    def sequence(self, x):
        """n -> Q_x(rho(n))."""
        return lambda n: self.q_eval(x, n)

    def sequence_family(self):
        """n -> (x -> Q_x(rho(n))), the layout apply_left expects."""
        return lambda n: (lambda x: self.q_eval(x, n))

    def bound_family(self):
        """n -> (x -> q_bound(x, n))."""
        return lambda n: (lambda x: self.q_bound(x, n))


@lru_cache(maxsize=DUAL_CACHE_SIZE)
def _dual_for_key(key, index):
    N, a, lam, gauge = key
    return DualFamily(build_params(N, a, lam, gauge=gauge), index)


def dual_for(p: ModelParams, index) -> DualFamily:
    """Shared DualFamily for the model key and family index.

    At most DUAL_CACHE_SIZE families are kept, least recently used first out.
    """
    return _dual_for_key(p.key, index)


# values

def rho(p: ModelParams, i, n):
    if n < 0:
        raise DomainError(f"rho is defined for n >= 0, got {n}")
    return dual_for(p, i).rho(n)


def upsilon(p: ModelParams, i, x):
    return dual_for(p, i).upsilon(x)


def q_eval(p: ModelParams, i, x, n):
    return dual_for(p, i).q_eval(x, n)


def q_recurrence_coeffs(p: ModelParams, i, x):
    if x < 0:
        raise DomainError(f"Dual recurrence coefficients are defined for x >= 0, got {x}")
    return dual_for(p, i).recurrence_coeffs(x)


def q_matrix_poly(p: ModelParams, i, x):
    return dual_for(p, i).q_matrix_poly(x)


def duality_residual(p: ModelParams, i, n, x):
    """P_n(x) against P_n(0) Q_x(rho(n)) Upsilon(x), with Q_x(rho(n)) Upsilon(x)
    taken from the scaled dual recurrence."""
    dual = dual_for(p, i)
    mvop = dual.mvop
    P0 = mvop.p_at_zero(n)
    rhs = P0 @ dual.scaled_from_recurrence(x, n)
    magnitude = max(np.max(abs_chain(P0, dual.scaled_bound(x, n))), np.max(mvop.p_bound(n, x)))
    return conditioned_residual(mvop.p_eval(n, x), rhs, magnitude)


def q_recurrence_residual(p: ModelParams, i, n, x):
    """Q_x(rho(n)) from the dual recurrence against P_n(0)^{-1} P_n(x) Upsilon(x)^{-1}."""
    dual = dual_for(p, i)
    magnitude = max(np.max(dual.q_recurrence_bound(x, n)), np.max(dual.q_bound(x, n)))
    return conditioned_residual(dual.q_from_recurrence(x, n), dual.q_eval(x, n), magnitude)


def rho3_relation_residual(p: ModelParams, n):
    """rho_3(n) against rho_1(n)/2 + rho_2(n) - (a - N - 2 lam)/2."""
    rhs = 0.5 * rho(p, 1, n) + rho(p, 2, n) - 0.5 * (p.a - p.N - 2 * p.lam) * p.I
    return residual(rho(p, 3, n), rhs)


# transports

def tau_transport(M: LeftDiffOp, dual: DualFamily):
    """tau(M) with coefficients P_n(0)^{-1} G_j(n) P_{n+j}(0), acting on n -> Q_x(rho(n))."""
    mvop = dual.mvop
    terms = {j: (lambda n, j=j, g=g: solve(mvop.p_at_zero(n), g(n) @ mvop.p_at_zero(n + j)))
             for j, g in M.terms.items()}
    return LeftDiffOp(terms, M.size, f"tau({M.label})")


def tau_transport_bound(M: LeftDiffOp, dual: DualFamily):
    """|P_n(0)^{-1}| |G_j(n)| |P_{n+j}(0)| for each shift of tau(M)."""
    mvop = dual.mvop
    terms = {j: (lambda n, j=j, g=g: abs_chain(mvop.p_at_zero_inv(n), g(n), mvop.p_at_zero(n + j)))
             for j, g in M.terms.items()}
    return LeftDiffOp(terms, M.size, f"|tau({M.label})|")


def sigma_transport(D: RightDiffOp, dual: DualFamily):
    """sigma(D) = sum_j eta^j Upsilon(x+j) F_j(x) Upsilon(x)^{-1}, acting on x -> Q_x."""
    size = D.size

    def coefficient(j, f):
        def value(x):
            if x + j < 0:
                return np.zeros((size, size))
            return dual.upsilon_product(x + j) @ f(x) @ dual.upsilon_inv(x)
        return value

    return RightDiffOp({j: coefficient(j, f) for j, f in D.terms.items()}, size, f"sigma({D.label})")


def sigma_transport_bound(D: RightDiffOp, dual: DualFamily):
    """|Upsilon(x+j)| |F_j(x)| |Upsilon(x)^{-1}| along the products that build sigma(D)."""
    size = D.size

    def coefficient(j, f):
        def value(x):
            if x + j < 0:
                return np.zeros((size, size))
            return abs_chain(dual.upsilon_bound(x + j), f(x), dual.upsilon_inv_bound(x))
        return value

    return RightDiffOp({j: coefficient(j, f) for j, f in D.terms.items()}, size, f"|sigma({D.label})|")


def sigma_residual(p: ModelParams, i, D: RightDiffOp, n, x):
    """P_n(0) (Q.sigma(D))_x(rho(n)) Upsilon(x) against (P_n.D)(x)."""
    dual = dual_for(p, i)
    mvop = dual.mvop
    P0 = mvop.p_at_zero(n)
    transported = apply_right(sigma_transport(D, dual), lambda y: dual.q_eval(y, n), x)
    lhs = P0 @ transported @ dual.upsilon_product(x)
    lhs_size = abs_chain(P0, apply_right(sigma_transport_bound(D, dual), lambda y: dual.q_bound(y, n), x),
                         dual.upsilon_bound(x))
    rhs_size = apply_right(D.absolute(), lambda y: mvop.p_bound(n, y), x)
    magnitude = max(np.max(lhs_size), np.max(rhs_size))
    return conditioned_residual(lhs, apply_right(D, mvop.polynomial(n), x), magnitude)


def commuting_square_residual(p: ModelParams, i, M: LeftDiffOp, D: RightDiffOp, n, x):
    """(tau(M).Q_x)(rho(n)) against (Q.sigma(D))_x(rho(n)) for a pair with M.P = P.D."""
    dual = dual_for(p, i)
    lhs = apply_left(tau_transport(M, dual), dual.sequence_family(), n, x)
    rhs = apply_right(sigma_transport(D, dual), lambda y: dual.q_eval(y, n), x)
    magnitude = max(np.max(apply_left(tau_transport_bound(M, dual), dual.bound_family(), n, x)),
                    np.max(apply_right(sigma_transport_bound(D, dual), lambda y: dual.q_bound(y, n), x)))
    return conditioned_residual(lhs, rhs, magnitude)


def dual_shift_residual(p: ModelParams, i, x, n):
    """Max residual of tau(M).Q_x = Q_{x+1} Upsilon(1)(I+A) and
    tau(M^dagger).Q_x = Q_{x-1} (x/a)(I+A)^{-1} Upsilon(1)^{-1}."""
    dual = dual_for(p, i)
    seq, sizes = dual.sequence_family(), dual.bound_family()
    up, up_inv = dual.upsilon_product(1), dual.upsilon_inv(1)
    ladder, ladder_dagger = ladder_m(dual.mvop), ladder_m_dagger(dual.mvop)
    raised = apply_left(tau_transport(ladder, dual), seq, n, x)
    lowered = apply_left(tau_transport(ladder_dagger, dual), seq, n, x)
    raised_rhs = dual.q_eval(x + 1, n) @ up @ (p.I + p.A)
    lowered_rhs = (x / p.a) * dual.q_eval(x - 1, n) @ ipa_pow(p, -1) @ up_inv
    raised_size = max(np.max(apply_left(tau_transport_bound(ladder, dual), sizes, n, x)),
                      np.max(abs_chain(dual.q_bound(x + 1, n), dual.upsilon_bound(1), p.I + p.A)))
    lowered_size = max(np.max(apply_left(tau_transport_bound(ladder_dagger, dual), sizes, n, x)),
                       np.max(abs(x / p.a) * abs_chain(dual.q_bound(x - 1, n), ipa_pow(p, -1),
                                                       dual.upsilon_inv_bound(1))))
    return max(conditioned_residual(raised, raised_rhs, raised_size),
               conditioned_residual(lowered, lowered_rhs, lowered_size))


def sigma_jfrak_first_family(p: ModelParams, x):
    """sigma_1(Jfrak)(x) = J + x + lam (I+A)^{-1}."""
    return p.J + x * p.I + p.lam * ipa_pow(p, -1)


# dual weight and orthogonality

def dual_weight_u(p: ModelParams, n):
    """a^{2n} L0*(I+A*)^{-lam}(I+A_{n+lam}*)^n D_n^{-1}(I+A_{n+lam})^n (I+A)^{-lam} L0."""
    right = script_A_pow(p, n + p.lam, n) @ ipa_pow(p, -p.lam) @ matL(p, 0)
    return p.a ** (2 * n) * right.T @ inv(family_for(p).norm_d(n)) @ right


def dual_weight_u_from_norms(p: ModelParams, n):
    """P_n(0)* H_n^{-1} P_n(0)."""
    mvop = family_for(p)
    P0 = mvop.p_at_zero(n)
    return P0.T @ mvop.norm_h_inv(n) @ P0


def dual_weight_conjugated(p: ModelParams, n):
    """(L0*)^{-1}(I+A*)^lam U(n) (I+A)^lam L0^{-1}."""
    left = matL_inv(p, 0).T @ ipa_star_pow(p, p.lam)
    return left @ dual_weight_u(p, n) @ left.T


def dual_sum(p: ModelParams, F, G, t: Truncation = None, label="dual inner product"):
    """Truncated sum over n >= 0 of F(n)* U(n) G(n)."""
    t = t or Truncation(max_terms=DEFAULT_DUAL_MAX_TERMS)
    return truncated_sum(lambda n: F(n).T @ dual_weight_u(p, n) @ G(n), t, label=label)


def dual_inner_product(p: ModelParams, i, x, y, t: Truncation = None):
    """<Q_x, Q_y> = sum_n Q_x(rho(n))* U(n) Q_y(rho(n)), truncated."""
    if x < 0 or y < 0:
        raise DomainError(f"Dual degrees must be nonnegative, got {x}, {y}")
    dual = dual_for(p, i)
    return dual_sum(p, dual.sequence(x), dual.sequence(y), t, label=f"dual inner product ({x},{y})")


def dual_norm(p: ModelParams, i, x):
    """(Upsilon(x) W(x) Upsilon(x)*)^{-1}."""
    U = dual_for(p, i).upsilon_product(x)
    return inv(U @ weight(p, x) @ U.T)


def adjoint_transport_residual(p: ModelParams, i, x, y, t: Truncation = None):
    """<tau(M).Q_x, Q_y> against <Q_x, tau(M^dagger).Q_y>."""
    dual = dual_for(p, i)
    seq = dual.sequence_family()
    tau_m = tau_transport(ladder_m(dual.mvop), dual)
    tau_md = tau_transport(ladder_m_dagger(dual.mvop), dual)
    lhs = dual_sum(p, lambda n: apply_left(tau_m, seq, n, x), dual.sequence(y), t)
    rhs = dual_sum(p, dual.sequence(x), lambda n: apply_left(tau_md, seq, n, y), t)
    return residual(lhs.value, rhs.value)


def christoffel_darboux_boundary(p: ModelParams, i, n, x, y):
    """Upsilon(x)^{-*}(P_{n+1}(x)* H_n^{-1} P_n(y) - P_n(x)* H_n^{-1} P_{n+1}(y))Upsilon(y)^{-1}."""
    dual = dual_for(p, i)
    mvop = dual.mvop
    H_inv = mvop.norm_h_inv(n)
    core = (mvop.p_eval(n + 1, x).T @ H_inv @ mvop.p_eval(n, y)
            - mvop.p_eval(n, x).T @ H_inv @ mvop.p_eval(n + 1, y))
    return dual.upsilon_inv(x).T @ core @ dual.upsilon_inv(y)


def christoffel_darboux_residual(p: ModelParams, i, n, x, y):
    """(x - y) sum_{k<=n} Q_x(rho(k))* U(k) Q_y(rho(k)) against the boundary term."""
    if x == y:
        raise DomainError("The Christoffel-Darboux identity needs x != y")
    dual = dual_for(p, i)
    partial = sum(dual.q_eval(x, k).T @ dual_weight_u(p, k) @ dual.q_eval(y, k) for k in range(n + 1))
    return residual((x - y) * partial, christoffel_darboux_boundary(p, i, n, x, y))


def boundary_decay(p: ModelParams, i, x, y, early=5, late=40):
    """max|boundary at late| / max|boundary at early|."""
    first = float(np.max(np.abs(christoffel_darboux_boundary(p, i, early, x, y))))
    last = float(np.max(np.abs(christoffel_darboux_boundary(p, i, late, x, y))))
    return last / first if first > 0 else last


# block Vandermonde condition

def vandermonde_condition(p: ModelParams, i, x, nu, conjugator=None):
    """|det| of the block Vandermonde matrix of rho(nu), ..., rho(nu + x).

    With a conjugator R every block is replaced by R^{-1} rho R.
    """
    dual = dual_for(p, i)
    blocks = [dual.rho(nu + s) for s in range(x + 1)]
    if conjugator is not None:
        R_inv = inv(conjugator)
        blocks = [R_inv @ block @ conjugator for block in blocks]
    return abs(block_vandermonde_det(blocks))


def vandermonde_formula_residual(p: ModelParams, i, x, nu):
    """Relative gap between the determinant and det(T)^{x(x+1)/2} prod (n_t - n_s)^N."""
    dual = dual_for(p, i)
    nodes = [nu + s for s in range(x + 1)]
    computed = block_vandermonde_det([dual.rho(n) for n in nodes])
    expected = block_vandermonde_formula(dual.leading_diagonal(), nodes, p.N)
    return abs(computed - expected) / max(abs(expected), 1e-300)


def equivalence_residual(p: ModelParams, i, R, x, n):
    """Conjugated family: S_x(R^{-1} rho R) against R^{-1} Q_x(rho) R."""
    dual = dual_for(p, i)
    R_inv = inv(R)
    q = dual.q_matrix_poly(x)
    conjugated = MatrixPolynomial([R_inv @ c @ R for c in q.coeffs], VariableSide.LEFT_MATRIX)
    rho_n = dual.rho(n)
    lhs = eval_matrix_poly(conjugated, R_inv @ rho_n @ R)
    return residual(lhs, R_inv @ eval_matrix_poly(q, rho_n) @ R)


# dual-dual families

def dualdual_first_residual(p: ModelParams, n, x):
    """Q_x(rho_1(n)) from the recurrence against P_n(0)^{-1} P_n(x) (I+A)^x a^x."""
    dual = dual_for(p, 1)
    mvop = dual.mvop
    rhs = solve(mvop.p_at_zero(n), mvop.p_eval(n, x)) @ ipa_pow(p, x) * p.a ** x
    magnitude = max(np.max(dual.q_recurrence_bound(x, n)), np.max(dual.q_bound(x, n)))
    return conditioned_residual(dual.q_from_recurrence(x, n), rhs, magnitude)


def dualdual_coeffs(p: ModelParams, n):
    """(B~_n, C~_n) of P~_n(X) X = P~_{n+1} + B~_n P~_n + C~_n P~_{n-1}, X on the right."""
    mvop = family_for(p)
    D = mvop.norm_d(n)
    B = (p.J + (n + p.a) * p.I + p.lam * ipa_pow(p, -1)
         + p.a * _conjugate_lam(p, D @ p.A.T @ inv(D)))
    if n == 0:
        return B, np.zeros((p.N, p.N))
    return B, _conjugate_lam(p, D @ inv(mvop.norm_d(n - 1)))


def dualdual_coeffs_from_norms(p: ModelParams, n):
    """The same pair as (I+A)^{-n} G0(n) (I+A)^n and (I+A)^{-n} G_{-1}(n) (I+A)^{n-1},
    with G0, G_{-1} the coefficients of the left partner of Jfrak."""
    mvop = family_for(p)
    H, H_inv = mvop.norm_h(n), mvop.norm_h_inv(n)
    G0 = p.J + (n + p.lam) * ipa_pow(p, -1) + p.a * H @ (p.I + p.A.T) @ H_inv
    B = ipa_pow(p, -n) @ G0 @ ipa_pow(p, n)
    if n == 0:
        return B, np.zeros((p.N, p.N))
    G_minus = H @ ipa_star_pow(p, -1) @ mvop.norm_h_inv(n - 1)
    return B, ipa_pow(p, -n) @ G_minus @ ipa_pow(p, n - 1)


def dualdual_poly(p: ModelParams, n):
    """Monic right-variable P~_n built from its recurrence."""
    if n < 0:
        raise DomainError(f"Dual-dual degree must be nonnegative, got {n}")
    N = p.N
    previous, current = None, MatrixPolynomial([p.I], VariableSide.RIGHT_MATRIX)
    for m in range(n):
        B, C = dualdual_coeffs(p, m)
        coeffs = [np.zeros((N, N))] + [c.copy() for c in current.coeffs]
        for k, c in enumerate(current.coeffs):
            coeffs[k] = coeffs[k] - B @ c
        if previous is not None:
            for k, c in enumerate(previous.coeffs):
                coeffs[k] = coeffs[k] - C @ c
        previous, current = current, MatrixPolynomial(coeffs, VariableSide.RIGHT_MATRIX)
    return current


def _dualdual_run(p: ModelParams, n, X):
    """P~_n(X) from P~_{m+1}(X) = P~_m(X) X - B~_m P~_m(X) - C~_m P~_{m-1}(X),
    with the same recurrence run on absolute values as a size bound."""
    previous, current = np.zeros((p.N, p.N)), p.I
    previous_bound, current_bound = np.zeros((p.N, p.N)), p.I
    for m in range(n):
        B, C = dualdual_coeffs(p, m)
        following = current @ X - B @ current - C @ previous
        following_bound = abs_chain(current_bound, X) + abs_chain(B, current_bound) + abs_chain(C, previous_bound)
        previous, current = current, following
        previous_bound, current_bound = current_bound, following_bound
    return current, current_bound


def dualdual_eval(p: ModelParams, n, x):
    """P~_n(Jfrak(x)), by the value recurrence."""
    if n < 0:
        raise DomainError(f"Dual-dual degree must be nonnegative, got {n}")
    return _dualdual_run(p, n, jfrak(p, x))[0]


def dualdual_second_residual(p: ModelParams, n, x):
    """P_n(x) against (I+A)^n P~_n(Jfrak(x))."""
    mvop = family_for(p)
    value, bound = _dualdual_run(p, n, jfrak(p, x))
    magnitude = max(np.max(abs_chain(ipa_pow(p, n), bound)), np.max(mvop.p_bound(n, x)))
    return conditioned_residual(mvop.p_eval(n, x), ipa_pow(p, n) @ value, magnitude)


# closed 2 x 2 forms of the first family

def rho_two_by_two(p: ModelParams, n):
    """rho_1(n) for N = 2 in its expanded form."""
    if p.N != 2:
        raise DomainError(f"The closed 2 x 2 form needs N = 2, got {p.N}")
    a, lam, r = p.a, p.lam, np.sqrt(p.a)
    block = np.array([[-n * a * (a + lam), n * a * r],
                      [r * (a + lam) * (a * lam + a - lam * n), n * a * (a + lam)]])
    return block / (a * a * (lam + n + 1)) + (a - lam - n) * p.I - p.J


def dual_weight_two_by_two(p: ModelParams, n):
    """(L0*)^{-1}(I+A*)^lam U(n)(I+A)^lam L0^{-1} for N = 2 in its expanded form."""
    if p.N != 2:
        raise DomainError(f"The closed 2 x 2 form needs N = 2, got {p.N}")
    a, lam, r = p.a, p.lam, np.sqrt(p.a)
    scale = np.exp(-a + lam * np.log(2) + (n - lam) * np.log(a) - gammaln(lam + 2) - gammaln(n + 1))
    return scale * np.array([[lam + n + 1, n / r],
                             [n / r, n * n / (a * (lam + n + 1)) + (lam + 1) / (lam + n + 2)]])
