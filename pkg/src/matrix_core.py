"""Model parameters and the structural matrices of the Charlier weight.

Matrices are dense float64 numpy arrays stored 0-based; the mathematical
entry (j, k) lives at [j - 1, k - 1].
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, solve
from scipy.special import gammaln

from src.exceptions import DomainError
from src.scalar_classical import charlier


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Size N, Poisson parameter a and family parameter lam, with derived data.

    Attributes:
        mu: gauge vector, mu_j = gauge * a^(-j/2) / sqrt((N-j)!).
        delta: diagonal of T^(lam), delta_k = (a/2)^lam (lam+k-1)!/(k-1)!.
        A: strictly lower shift with A[j+1, j] = mu_{j+1} / mu_j.
        J: diag(1, ..., N).
        T: diag(delta).
    """
    N: int
    a: float
    lam: int
    gauge: float = 1.0
    mu: np.ndarray = field(default=None, repr=False)
    delta: np.ndarray = field(default=None, repr=False)
    A: np.ndarray = field(default=None, repr=False)
    J: np.ndarray = field(default=None, repr=False)
    T: np.ndarray = field(default=None, repr=False)

    @property
    def key(self):
        return (self.N, float(self.a), self.lam, float(self.gauge))

    @property
    def I(self):
        return np.eye(self.N)

    def shifted(self, dl):
        """The same model with lam replaced by lam + dl."""
        return build_params(self.N, self.a, self.lam + dl, gauge=self.gauge)


def build_params(N, a, lam, gauge=1.0):
    """Builds ModelParams after validating N >= 2, a > 0 and integer lam >= 0."""
    if int(N) != N or N < 2:
        raise DomainError(f"N must be an integer >= 2, got {N}")
    if not np.isfinite(a) or a <= 0:
        raise DomainError(f"a must be a positive real, got {a}")
    if int(lam) != lam or lam < 0:
        raise DomainError(f"lambda must be a nonnegative integer, got {lam}")
    if not np.isfinite(gauge) or gauge == 0:
        raise DomainError(f"gauge factor must be finite and nonzero, got {gauge}")
    N, lam = int(N), int(lam)
    j = np.arange(1, N + 1)
    mu = gauge * np.exp(-0.5 * j * np.log(a) - 0.5 * gammaln(N - j + 1))
    delta = np.exp(lam * np.log(a / 2) + gammaln(lam + j) - gammaln(j))
    A = np.zeros((N, N))
    for i in range(N - 1):
        A[i + 1, i] = mu[i + 1] / mu[i]
    logging.debug(f"Built model params N={N}, a={a}, lambda={lam}, gauge={gauge}")
    return ModelParams(N=N, a=float(a), lam=lam, gauge=float(gauge), mu=mu,
                       delta=delta, A=A, J=np.diag(j.astype(float)), T=np.diag(delta))


def unipotent_pow(nil, k):
    """(I + nil)^k for nilpotent nil and any real k, as a finite binomial sum.

    The coefficients k(k-1)...(k-s+1)/s! are formed as exact products so that
    negative k needs no gamma function poles.
    """
    size = nil.shape[0]
    result = np.eye(size)
    power = np.eye(size)
    for s in range(1, size):
        power = power @ nil
        if not power.any():
            break
        coefficient = math.prod(k - i for i in range(s)) / math.factorial(s)
        result = result + coefficient * power
    return result


def ipa_pow(p: ModelParams, k):
    """(I + A)^k for any integer k."""
    return unipotent_pow(p.A, k)


def ipa_star_pow(p: ModelParams, k):
    """(I + A*)^k, the transpose of ipa_pow."""
    return unipotent_pow(p.A.T, k)


def matL(p: ModelParams, x):
    """Unipotent lower triangular L(x) with Charlier entries."""
    L = np.eye(p.N)
    for j in range(p.N):
        for k in range(j):
            d = j - k
            L[j, k] = (p.mu[j] / p.mu[k]) * (-p.a) ** d * charlier(d, p.a, x) / math.factorial(d)
    return L


def matL_inv(p: ModelParams, x):
    """Inverse of L(x), built from Charlier polynomials with parameter -a at -x."""
    L = np.eye(p.N)
    for j in range(p.N):
        for k in range(j):
            d = j - k
            L[j, k] = (p.mu[j] / p.mu[k]) * p.a ** d * charlier(d, -p.a, -x) / math.factorial(d)
    return L


def script_A(p: ModelParams, m):
    """Strictly upper triangular (N + m - J)^{-1} J A* on rows 1..N-1.

    Row N of J A* vanishes, so only N + m - j for j <= N - 1 must be nonzero.
    """
    S = np.zeros((p.N, p.N))
    for i in range(p.N - 1):
        j = i + 1
        denominator = p.N + m - j
        if denominator == 0:
            raise DomainError(f"N + m - J is singular at j={j} for m={m}")
        S[i, i + 1] = j * p.A[i + 1, i] / denominator
    return S


def script_A_pow(p: ModelParams, m, k):
    """(I + script_A(m))^k."""
    return unipotent_pow(script_A(p, m), k)


def scaled_script_A_pow(p: ModelParams, n):
    """(-a)^{-n} (I + script_A(n + lam))^n, finite at every integer n >= 0."""
    return (-p.a) ** (-n) * script_A_pow(p, n + p.lam, n)


def matL_structure_residual(p: ModelParams, x):
    """Largest residual of L(x+1) = L(x)(I+A), L(x)A = AL(x) and
    L(x) = L(0)(I+A)^x = (I+A)^x L(0)."""
    L = matL(p, x)
    L0 = matL(p, 0)
    step = ipa_pow(p, x)
    return max(residual(matL(p, x + 1), L @ ipa_pow(p, 1)),
               residual(L @ p.A, p.A @ L),
               residual(L, L0 @ step),
               residual(L, step @ L0))


def conjugation_residuals(p: ModelParams, x, k):
    """Residuals of the conjugations of J by L(x) and (I+A)^k.

    Returns:
        tuple: [J, L(x)] = xA(I+A)^{-1}L(x) - aAL(x),
        (I+A)^k J (I+A)^{-k} = J - kA(I+A)^{-1} and
        L(x)^{-1} J L(x) = J - aA + xA(I+A)^{-1}.
    """
    L = matL(p, x)
    shift = p.A @ ipa_pow(p, -1)
    return (residual(commutator(p.J, L), x * shift @ L - p.a * p.A @ L),
            residual(ipa_pow(p, k) @ p.J @ ipa_pow(p, -k), p.J - k * shift),
            residual(matL_inv(p, x) @ p.J @ L, p.J - p.a * p.A + x * shift))


def jfrak(p: ModelParams, x):
    """J + (x + lam)(I + A)^{-1}."""
    return p.J + (x + p.lam) * ipa_pow(p, -1)


def commutator(X, Y):
    return X @ Y - Y @ X


def inv(M):
    return solve(M, np.eye(M.shape[0]))


def residual(lhs, rhs):
    """Max-abs difference scaled by max(1, max|lhs|, max|rhs|)."""
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    scale = max(1.0, float(np.max(np.abs(lhs))), float(np.max(np.abs(rhs))))
    return float(np.max(np.abs(lhs - rhs))) / scale


def conditioned_residual(lhs, rhs, magnitude):
    """Max-abs difference scaled by max(1, max|lhs|, max|rhs|, magnitude).

    magnitude is the size of the terms that were combined to form lhs and rhs
    (see abs_product), so rounding in cancelling sums is measured against it.
    """
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    scale = max(1.0, float(np.max(np.abs(lhs))), float(np.max(np.abs(rhs))), float(magnitude))
    return float(np.max(np.abs(lhs - rhs))) / scale


def abs_chain(*factors):
    """|F_1| |F_2| ... |F_k|, an entrywise bound on F_1 F_2 ... F_k."""
    result = np.abs(np.asarray(factors[0], dtype=float))
    for factor in factors[1:]:
        result = result @ np.abs(np.asarray(factor, dtype=float))
    return result


def abs_product(*factors):
    """max-abs entry of abs_chain(*factors)."""
    return float(np.max(abs_chain(*factors)))


def lu_det(M):
    """Determinant from an LU factorisation with partial pivoting."""
    lu, piv = lu_factor(M, check_finite=True)
    swaps = int(np.count_nonzero(piv != np.arange(len(piv))))
    return float((-1) ** swaps * np.prod(np.diag(lu)))


def block_vandermonde(blocks):
    """Stacks block rows (I, M, M^2, ..., M^x) for x + 1 square blocks."""
    count = len(blocks)
    size = blocks[0].shape[0]
    V = np.zeros((count * size, count * size))
    for row, M in enumerate(blocks):
        if M.shape != (size, size):
            raise DomainError(f"Block {row} has shape {M.shape}, expected {(size, size)}")
        power = np.eye(size)
        for col in range(count):
            V[row * size:(row + 1) * size, col * size:(col + 1) * size] = power
            power = power @ M
    return V


def block_vandermonde_det(blocks):
    """Determinant of the block Vandermonde matrix of the given blocks."""
    if len(blocks) == 1:
        return 1.0
    return lu_det(block_vandermonde(blocks))


def block_vandermonde_formula(leading, nodes, size):
    """det(T)^{x(x+1)/2} prod_{s<t}(n_t - n_s)^N for blocks n T + upper triangular."""
    x = len(nodes) - 1
    value = np.linalg.det(leading) ** (x * (x + 1) // 2)
    for t in range(len(nodes)):
        for s in range(t):
            value *= (nodes[t] - nodes[s]) ** size
    return float(value)
