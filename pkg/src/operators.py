"""Matrix difference operators acting on the variable x (from the right) and
on the degree n (from the left), with the concrete operators of the
Charlier family and the checks that pair them through the polynomials.

Operators are extensional: a dict from shift to coefficient callable.
Equality is tested by application to the basis P_0, P_1, ...
"""
import logging
from functools import lru_cache

import numpy as np

from src.matrix_core import ModelParams, commutator, conditioned_residual, inv, ipa_pow, ipa_star_pow, jfrak, residual
from src.mvop import MVOPFamily, family_for, gamma_n
from src.weight import pearson

BASIS_DEGREE = 8
BASIS_POINTS = 10


def _zero_like(size):
    return lambda _: np.zeros((size, size))


class RightDiffOp:
    """D = sum_j eta^j F_j(x), acting by (F.D)(x) = sum_j F(x+j) F_j(x).

    Args:
        terms (dict): shift j -> callable x -> matrix.
        size (int): Matrix size.
        label (str): Name used in reports.
    """

    def __init__(self, terms, size, label=""):
        self.terms = dict(sorted(terms.items()))
        self.size = size
        self.label = label

    def coefficient(self, j, x):
        if j not in self.terms:
            return np.zeros((self.size, self.size))
        return self.terms[j](x)

    def __add__(self, other):
        return _merge(self, other, 1.0, RightDiffOp)

    def __sub__(self, other):
        return _merge(self, other, -1.0, RightDiffOp)

    def scaled(self, c):
        return RightDiffOp({j: (lambda x, f=f: c * f(x)) for j, f in self.terms.items()},
                           self.size, f"{c}*{self.label}")

    def absolute(self):
        """Entrywise |F_j(x)|, the operator used to size (F.D)(x)."""
        return RightDiffOp({j: (lambda x, f=f: np.abs(f(x))) for j, f in self.terms.items()},
                           self.size, f"|{self.label}|")

    def __repr__(self):
        return f"RightDiffOp({self.label or 'unnamed'}, shifts={list(self.terms)})"


class LeftDiffOp:
    """M = sum_j G_j(n) delta^j, acting by (M.P)_n = sum_j G_j(n) P_{n+j}, P_k = 0 for k < 0.

    Coefficients are only evaluated where n + j >= 0.
    """

    def __init__(self, terms, size, label=""):
        self.terms = dict(sorted(terms.items()))
        self.size = size
        self.label = label

    def coefficient(self, j, n):
        if j not in self.terms or n + j < 0:
            return np.zeros((self.size, self.size))
        return self.terms[j](n)

    def __add__(self, other):
        return _merge(self, other, 1.0, LeftDiffOp)

    def __sub__(self, other):
        return _merge(self, other, -1.0, LeftDiffOp)

    def scaled(self, c):
        return LeftDiffOp({j: (lambda n, f=f: c * f(n)) for j, f in self.terms.items()},
                          self.size, f"{c}*{self.label}")

    def absolute(self):
        return LeftDiffOp({j: (lambda n, f=f: np.abs(f(n))) for j, f in self.terms.items()},
                          self.size, f"|{self.label}|")

    def __repr__(self):
        return f"LeftDiffOp({self.label or 'unnamed'}, shifts={list(self.terms)})"


def _merge(first, second, sign, kind):
    terms = {}
    for j in set(first.terms) | set(second.terms):
        f = first.terms.get(j, _zero_like(first.size))
        g = second.terms.get(j, _zero_like(first.size))
        terms[j] = lambda v, f=f, g=g: f(v) + sign * g(v)
    op = "+" if sign > 0 else "-"
    return kind(terms, first.size, f"({first.label} {op} {second.label})")


def apply_right(D: RightDiffOp, F, x):
    """(F.D)(x)."""
    value = np.zeros((D.size, D.size))
    for j, coeff in D.terms.items():
        value = value + F(x + j) @ coeff(x)
    return value


def apply_left(M: LeftDiffOp, family, n, x):
    """(M.P)_n(x) for family: k -> (x -> P_k(x))."""
    value = np.zeros((M.size, M.size))
    for j, coeff in M.terms.items():
        if n + j < 0:
            continue
        value = value + coeff(n) @ family(n + j)(x)
    return value


def compose_right(D1: RightDiffOp, D2: RightDiffOp):
    """D1 D2, acting as F.(D1 D2) = (F.D1).D2."""
    pairs = {}
    for j, f in D1.terms.items():
        for k, g in D2.terms.items():
            pairs.setdefault(j + k, []).append((k, f, g))

    def coefficient(parts):
        return lambda x: sum(f(x + k) @ g(x) for k, f, g in parts)

    terms = {s: coefficient(parts) for s, parts in pairs.items()}
    return RightDiffOp(terms, D1.size, f"{D1.label}{D2.label}")


def commutator_right(D1: RightDiffOp, D2: RightDiffOp):
    return compose_right(D1, D2) - compose_right(D2, D1)


def compose_left(M1: LeftDiffOp, M2: LeftDiffOp):
    """M1 M2, acting as (M1 M2).P = M1.(M2.P), with (M2.P)_k = 0 for k < 0."""
    pairs = {}
    for j, g in M1.terms.items():
        for k, h in M2.terms.items():
            pairs.setdefault(j + k, []).append((j, g, h))

    def coefficient(parts, size):
        def value(n):
            total = np.zeros((size, size))
            for j, g, h in parts:
                if n + j >= 0:
                    total = total + g(n) @ h(n + j)
            return total
        return value

    terms = {s: coefficient(parts, M1.size) for s, parts in pairs.items()}
    return LeftDiffOp(terms, M1.size, f"{M1.label}{M2.label}")


def commutator_left(M1: LeftDiffOp, M2: LeftDiffOp):
    return compose_left(M1, M2) - compose_left(M2, M1)


def adjoint_left(M: LeftDiffOp, norms):
    """M^dagger = sum_j H_n G_j(n-j)* H_{n-j}^{-1} delta^{-j}."""
    terms = {}
    for j, g in M.terms.items():
        terms[-j] = lambda n, j=j, g=g: norms(n) @ g(n - j).T @ inv(norms(n - j))
    return LeftDiffOp(terms, M.size, f"{M.label}^dagger")


# operators in x

def identity_op(p: ModelParams):
    return RightDiffOp({0: lambda x: p.I}, p.N, "I")


def x_op(p: ModelParams):
    return RightDiffOp({0: lambda x: x * p.I}, p.N, "x")


def raising_op(p: ModelParams):
    """D = eta (I+A)."""
    return RightDiffOp({1: lambda x: p.I + p.A}, p.N, "D")


def lowering_op(p: ModelParams):
    """D^dagger = eta^{-1} (x/a) (I+A)^{-1}."""
    inv_ipa = ipa_pow(p, -1)
    return RightDiffOp({-1: lambda x: (x / p.a) * inv_ipa}, p.N, "Ddag")


def jfrak_op(p: ModelParams):
    return RightDiffOp({0: lambda x: jfrak(p, x)}, p.N, "Jfrak")


def dfrak_op(p: ModelParams):
    """a eta (I+A) - J - (x+lam)(I+A)^{-1} + eta^{-1} x (I+A)^{-1}."""
    inv_ipa = ipa_pow(p, -1)
    return RightDiffOp({1: lambda x: p.a * (p.I + p.A),
                        0: lambda x: -jfrak(p, x),
                        -1: lambda x: x * inv_ipa}, p.N, "Dfrak")


def delta_op(p: ModelParams):
    return RightDiffOp({1: lambda x: p.I, 0: lambda x: -p.I}, p.N, "Delta")


def s_op(p: ModelParams):
    """S^(lam) = -Phi(x)* + eta^{-1}(Phi(x)* - Psi(x)*)."""
    data = pearson(p)
    return RightDiffOp({0: lambda x: -data.phi(x).T,
                        -1: lambda x: (data.phi(x) - data.psi(x)).T}, p.N, f"S({p.lam})")


def delta_s_op(p: ModelParams):
    return compose_right(delta_op(p), s_op(p))


def s_delta_op(p: ModelParams):
    """S^(lam-1) Delta."""
    return compose_right(s_op(p.shifted(-1)), delta_op(p))


# operators in n

def constant_left(p: ModelParams, coefficient, label):
    return LeftDiffOp({0: coefficient}, p.N, label)


def recurrence_op(family: MVOPFamily):
    """L = delta + B_n + C_n delta^{-1}, paired with multiplication by x."""
    p = family.params
    return LeftDiffOp({1: lambda n: p.I, 0: family.rec_b, -1: family.rec_c}, p.N, "L")


def ladder_m(family: MVOPFamily):
    """M = (I+A) + (1/a) H_n (I+A*)^{-1} H_{n-1}^{-1} delta^{-1}, paired with D."""
    p = family.params
    inv_ipas = ipa_star_pow(p, -1)
    return LeftDiffOp({0: lambda n: p.I + p.A,
                       -1: lambda n: family.norm_h(n) @ inv_ipas @ family.norm_h_inv(n - 1) / p.a},
                      p.N, "M")


def ladder_m_dagger(family: MVOPFamily):
    """M^dagger = (1/a)(I+A)^{-1} delta + H_n (I+A*) H_n^{-1}, paired with D^dagger."""
    p = family.params
    inv_ipa = ipa_pow(p, -1)
    return LeftDiffOp({1: lambda n: inv_ipa / p.a,
                       0: lambda n: family.norm_h(n) @ (p.I + p.A.T) @ family.norm_h_inv(n)},
                      p.N, "Mdag")


def psi_inverse_jfrak(family: MVOPFamily):
    """Explicit left partner of Jfrak."""
    p = family.params
    inv_ipa = ipa_pow(p, -1)
    return LeftDiffOp({1: lambda n: inv_ipa,
                       0: lambda n: (p.J + (n + p.lam) * inv_ipa
                                     + p.a * family.norm_h(n) @ (p.I + p.A.T) @ family.norm_h_inv(n)),
                       -1: lambda n: family.norm_h(n) @ ipa_star_pow(p, -1) @ family.norm_h_inv(n - 1)},
                      p.N, "psi^-1(Jfrak)")


def psi_inverse_jfrak_from_ladders(family: MVOPFamily):
    """a M + a M^dagger - Gamma_n."""
    p = family.params
    gamma = constant_left(p, lambda n: gamma_n(p, n), "Gamma")
    return ladder_m(family).scaled(p.a) + ladder_m_dagger(family).scaled(p.a) - gamma


def gamma_op(family: MVOPFamily):
    p = family.params
    return constant_left(p, lambda n: gamma_n(p, n), "Gamma")


def delta_s_eigen_op(family: MVOPFamily):
    """n G_n, the partner of Delta S^(lam)."""
    p = family.params
    return constant_left(p, lambda n: n * family.shift_g(n) if n >= 1 else np.zeros((p.N, p.N)), "nG")


def s_delta_eigen_op(family: MVOPFamily):
    """(n+1) G_{n+1}^(lam-1), the partner of S^(lam-1) Delta."""
    p = family.params
    lower = family_for(p.shifted(-1))
    return constant_left(p, lambda n: (n + 1) * lower.shift_g(n + 1), "(n+1)G'")


# checks

def psi_residual(M: LeftDiffOp, D: RightDiffOp, family: MVOPFamily, n_max=BASIS_DEGREE, x_max=BASIS_POINTS):
    """max over n <= n_max, 0 <= x <= x_max of |(M.P)_n(x) - (P_n.D)(x)|, relative."""
    worst = 0.0
    for n in range(n_max + 1):
        P = family.polynomial(n)
        for x in range(x_max + 1):
            worst = max(worst, residual(apply_left(M, family.polynomial, n, x), apply_right(D, P, x)))
    return worst


def operator_gap(D1: RightDiffOp, D2: RightDiffOp, family: MVOPFamily, n_max=BASIS_DEGREE, x_max=BASIS_POINTS):
    """Largest difference of two x-operators on the basis P_0..P_{n_max}."""
    worst = 0.0
    for n in range(n_max + 1):
        P = family.polynomial(n)
        for x in range(x_max + 1):
            worst = max(worst, residual(apply_right(D1, P, x), apply_right(D2, P, x)))
    return worst


def left_operator_gap(M1: LeftDiffOp, M2: LeftDiffOp, family: MVOPFamily, n_max=BASIS_DEGREE, x_max=BASIS_POINTS):
    worst = 0.0
    for n in range(n_max + 1):
        for x in range(x_max + 1):
            worst = max(worst, residual(apply_left(M1, family.polynomial, n, x),
                                        apply_left(M2, family.polynomial, n, x)))
    return worst


def ladder_at_zero_residual(family: MVOPFamily, n):
    """0 = P_{n+1}(0) + a(I+A) H_n (I+A*) H_n^{-1} P_n(0)."""
    p = family.params
    lhs = family.p_at_zero(n + 1)
    rhs = -p.a * (p.I + p.A) @ family.norm_h(n) @ (p.I + p.A.T) @ family.norm_h_inv(n) @ family.p_at_zero(n)
    return residual(lhs, rhs)


def lowering_coefficient_at_zero(D: RightDiffOp):
    """max|F_{-1}(0)|; zero for the operators that generate dual families."""
    return float(np.max(np.abs(D.coefficient(-1, 0))))


def apply_word(word, F, x):
    """(F.D_1 D_2 ... D_k)(x), with D_1 applied first."""
    if not word:
        return F(x)
    *head, last = word
    return apply_right(last, lambda y: apply_word(head, F, y), x)


def word_gap(lhs, rhs, family: MVOPFamily, n_max=BASIS_DEGREE, x_max=BASIS_POINTS):
    """Largest gap between two sums of operator words on the basis P_0..P_{n_max}.

    Each side is a list of (c, [D_1, ..., D_k]) read as sum c F.(D_1 ... D_k).
    Words are applied one operator at a time and the gap is measured against
    the same words applied with |coefficients| to |P_n|.

    Returns:
        float: The largest conditioned residual.
    """
    size = family.params.N
    sides = [[(c, word, [D.absolute() for D in word]) for c, word in side] for side in (lhs, rhs)]
    worst = 0.0
    for n in range(n_max + 1):
        P = lru_cache(maxsize=None)(family.polynomial(n))
        P_abs = lru_cache(maxsize=None)(lambda y, P=P: np.abs(P(y)))
        for x in range(x_max + 1):
            values, magnitude = [], 0.0
            for side in sides:
                value = np.zeros((size, size))
                for c, word, abs_word in side:
                    value = value + c * apply_word(word, P, x)
                    magnitude += abs(c) * float(np.max(apply_word(abs_word, P_abs, x)))
                values.append(value)
            worst = max(worst, conditioned_residual(values[0], values[1], magnitude))
    return worst


def lie_checks(family: MVOPFamily, n_max=BASIS_DEGREE, x_max=BASIS_POINTS):
    """Residuals of the brackets of D, D^dagger, Jfrak, x and of the Casimir.

    Returns:
        dict: check name -> largest residual on the basis.
    """
    p = family.params
    D, Dd, Jf, X = raising_op(p), lowering_op(p), jfrak_op(p), x_op(p)
    casimir = [(p.a, [D, Dd]), (-1.0, [Jf])]

    def bracket(first, second):
        return [(1.0, [first, second]), (-1.0, [second, first])]

    def casimir_bracket(E):
        return [(c, word + [E]) for c, word in casimir] + [(-c, [E] + word) for c, word in casimir]

    def gap(lhs, rhs):
        return word_gap(lhs, rhs, family, n_max, x_max)

    checks = {
        "[Jfrak,D]=D": gap(bracket(Jf, D), [(1.0, [D])]),
        "[Jfrak,Ddag]=-Ddag": gap(bracket(Jf, Dd), [(-1.0, [Dd])]),
        "[D,x]=-D": gap(bracket(D, X), [(-1.0, [D])]),
        "[Ddag,x]=Ddag": gap(bracket(Dd, X), [(1.0, [Dd])]),
        "[D,Ddag]=-I/a": gap(bracket(D, Dd), [(-1.0 / p.a, [])]),
        "casimir=x-Jfrak": gap(casimir, [(1.0, [X]), (-1.0, [Jf])]),
        "[casimir,D]=0": gap(casimir_bracket(D), []),
        "[casimir,Ddag]=0": gap(casimir_bracket(Dd), []),
        "[casimir,Jfrak]=0": gap(casimir_bracket(Jf), []),
    }
    logging.debug(f"Lie checks for N={p.N}, a={p.a}, lambda={p.lam}: {max(checks.values()):.3e}")
    return checks


def structural_commutators(p: ModelParams, k=3):
    """[J, A] = A and [J, (I+A)^k] = k(I+A)^k - k(I+A)^{k-1}."""
    first = residual(commutator(p.J, p.A), p.A)
    second = residual(commutator(p.J, ipa_pow(p, k)), k * ipa_pow(p, k) - k * ipa_pow(p, k - 1))
    return max(first, second)
