"""Scalar special functions: Charlier and dual Hahn polynomials, their weights
and the Pochhammer symbol.

All hypergeometric sums here terminate, so they are evaluated term by term
with the ratio of consecutive terms.
"""
import numpy as np
from scipy.special import gammaln

from src.data_models import DualHahnParams
from src.exceptions import DomainError


def pochhammer(z, k):
    """Rising factorial (z)_k = z(z+1)...(z+k-1), with (z)_0 = 1."""
    if k < 0:
        raise DomainError(f"Pochhammer length must be nonnegative, got {k}")
    return float(np.prod(z + np.arange(k, dtype=float)))


def charlier(n, a, x):
    """Charlier polynomial c_n^(a)(x) as a terminating 2F0 sum.

    Args:
        n (int): Degree, n >= 0.
        a (float): Nonzero parameter. Negative values give c^(-a) used by the
            inverse of L(x).
        x (float): Evaluation point.

    Returns:
        float: sum_{k=0}^{n} (-n)_k (-x)_k / k! (-1/a)^k.
    """
    if a == 0:
        raise DomainError(f"Charlier parameter a must be nonzero, got {a}")
    if n < 0:
        raise DomainError(f"Charlier degree must be nonnegative, got {n}")
    term = 1.0
    total = 1.0
    for k in range(n):
        term *= (k - n) * (k - x) / ((k + 1) * -a)
        total += term
    return total


def dual_hahn(k, x, p: DualHahnParams):
    """Dual Hahn polynomial R_k(lambda(x); gamma, delta, bigN).

    Evaluates 3F2(-k, -x, x+gamma+delta+1; gamma+1, -bigN; 1) with k+1 terms.
    """
    if k < 0 or k > p.bigN:
        raise DomainError(f"Dual Hahn degree must lie in [0, {p.bigN}], got {k}")
    upper = x + p.gamma + p.delta + 1
    term = 1.0
    total = 1.0
    for s in range(k):
        term *= (s - k) * (s - x) * (upper + s) / ((p.gamma + 1 + s) * (s - p.bigN) * (s + 1))
        total += term
    return total


def dual_hahn_weight(x, p: DualHahnParams):
    """Standard dual Hahn weight for integer gamma and delta.

    (2x+g+d+1)(g+x)!(x+g+d)! d! (bigN!)^2 / (x! g! (d+x)! (bigN-x)! (x+g+d+bigN+1)!)
    """
    g, d, big_n = p.gamma, p.delta, p.bigN
    if int(g) != g or int(d) != d:
        raise DomainError(f"Dual Hahn weight needs integer gamma and delta, got {g}, {d}")
    if not 0 <= x <= big_n:
        raise DomainError(f"Dual Hahn weight is supported on 0..{big_n}, got x={x}")
    arguments = [g + x, x + g + d, d, x, g, d + x, big_n - x, x + g + d + big_n + 1]
    if min(arguments) < 0:
        raise DomainError(f"Negative factorial argument in dual Hahn weight (x={x}, {p})")

    def lf(m):
        return gammaln(m + 1)

    log_w = (lf(g + x) + lf(x + g + d) + lf(d) + 2 * lf(big_n)
             - (lf(x) + lf(g) + lf(d + x) + lf(big_n - x) + lf(x + g + d + big_n + 1)))
    return float((2 * x + g + d + 1) * np.exp(log_w))


# identities of the scalar families

def _balance(*terms):
    """|sum of terms| relative to max(1, largest |term|)."""
    return abs(sum(terms)) / max([1.0] + [abs(t) for t in terms])


def charlier_shift_residuals(n, a, x):
    """Forward shift c_n(x+1) - c_n(x) + (n/a) c_{n-1}(x) and backward shift
    c_{n+1}(x) - c_n(x) + (x/a) c_n(x-1), both zero."""
    previous = charlier(n - 1, a, x) if n >= 1 else 0.0
    forward = _balance(charlier(n, a, x + 1), -charlier(n, a, x), (n / a) * previous)
    backward = _balance(charlier(n + 1, a, x), -charlier(n, a, x), (x / a) * charlier(n, a, x - 1))
    return forward, backward


def charlier_difference_residual(n, a, x):
    """a c_n(x+1) - (x+a) c_n(x) + x c_n(x-1) + n c_n(x) = 0."""
    return _balance(a * charlier(n, a, x + 1), -(x + a) * charlier(n, a, x),
                    x * charlier(n, a, x - 1), n * charlier(n, a, x))


def charlier_self_duality_residual(n, m, a):
    """|c_n(m) - c_m(n)| relative to max(1, |c_n(m)|)."""
    first, second = charlier(n, a, m), charlier(m, a, n)
    return abs(first - second) / max(1.0, abs(first))


def charlier_convolution_residual(n, a, x):
    """sum_m (-1)^m c_{n-m}^(a)(x)/(n-m)! c_m^(-a)(-x)/m! against delta_{n,0}."""
    terms = [(-1) ** m * charlier(n - m, a, x) * charlier(m, -a, -x)
             * np.exp(-gammaln(n - m + 1) - gammaln(m + 1)) for m in range(n + 1)]
    return _balance(*terms, -1.0 if n == 0 else 0.0)


def charlier_generating_residual(x, a, t, terms=120):
    """sum_n c_n(x) t^n / n! against e^t (1 - t/a)^x for integer x >= 0."""
    if x < 0 or int(x) != x:
        raise DomainError(f"The generating function check needs a nonnegative integer x, got {x}")
    total = sum(charlier(n, a, x) * t ** n * np.exp(-gammaln(n + 1)) for n in range(terms))
    expected = np.exp(t) * (1 - t / a) ** x
    return abs(total - expected) / max(1.0, abs(expected))


def charlier_orthogonality_residual(n, m, a, tail=1e-16):
    """sum_x a^x/x! c_n(x) c_m(x) against delta_{n,m} e^a n!/a^n, relative to
    the geometric mean of the two norms.

    The sum runs past x = a until three consecutive summands, weight times
    both polynomials, are below tail times the larger of the running total
    and the largest summand seen.
    """
    total, peak, small_run, x = 0.0, 0.0, 0, 0
    while small_run < 3:
        term = np.exp(x * np.log(a) - gammaln(x + 1)) * charlier(n, a, x) * charlier(m, a, x)
        total += term
        peak = max(peak, abs(term))
        small_run = small_run + 1 if x > a and abs(term) <= tail * max(peak, abs(total)) else 0
        x += 1
    norm_n = np.exp(a + gammaln(n + 1) - n * np.log(a))
    norm_m = np.exp(a + gammaln(m + 1) - m * np.log(a))
    expected = norm_n if n == m else 0.0
    return abs(total - expected) / np.sqrt(norm_n * norm_m)


def dual_hahn_orthogonality_residual(j, k, p: DualHahnParams):
    """sum_x w(x) R_j(x) R_k(x) for j != k, relative to the diagonal sums."""
    if j == k:
        return 0.0

    def gram(r, s):
        return sum(dual_hahn_weight(x, p) * dual_hahn(r, x, p) * dual_hahn(s, x, p) for x in range(p.bigN + 1))

    return abs(gram(j, k)) / np.sqrt(gram(j, j) * gram(k, k))


def dual_hahn_orthogonality_worst(p: DualHahnParams):
    """Largest off-diagonal entry of the normalised Gram matrix of R_0..R_bigN."""
    support = range(p.bigN + 1)
    values = np.array([[dual_hahn(k, x, p) for x in support] for k in support])
    w = np.array([dual_hahn_weight(x, p) for x in support])
    gram = (values * w) @ values.T
    diagonal = np.sqrt(np.diag(gram))
    normalised = gram / np.outer(diagonal, diagonal)
    return float(np.max(np.abs(normalised - np.eye(p.bigN + 1))))
