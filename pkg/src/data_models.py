from dataclasses import dataclass, asdict, field
from typing import Optional

import numpy as np

from src.constants import DEFAULT_DUAL_MAX_TERMS, DEFAULT_MAX_TERMS, DEFAULT_TRUNC_EPS
from src.exceptions import DomainError


@dataclass(frozen=True)
class DualHahnParams:
    """Parameters (gamma, delta, bigN) of a terminating dual Hahn family."""
    gamma: float
    delta: float
    bigN: int

    def __post_init__(self):
        if self.gamma + 1 <= 0:
            raise DomainError(f"Dual Hahn gamma must satisfy gamma + 1 > 0, got {self.gamma}")
        if self.bigN < 0 or int(self.bigN) != self.bigN:
            raise DomainError(f"Dual Hahn bigN must be a nonnegative integer, got {self.bigN}")


@dataclass(frozen=True)
class Truncation:
    """Stopping rule for infinite matrix sums.

    A sum stops once three consecutive terms are below eps times the larger
    of the running sum and the largest term seen (all measured by max-abs
    entry), or fails at max_terms. An exactly zero term counts as small.
    """
    eps: float = DEFAULT_TRUNC_EPS
    max_terms: int = DEFAULT_MAX_TERMS

    def __post_init__(self):
        if self.eps <= 0:
            raise DomainError(f"Truncation eps must be positive, got {self.eps}")
        if self.max_terms < 1:
            raise DomainError(f"Truncation max_terms must be positive, got {self.max_terms}")


@dataclass
class TruncatedSum:
    """A truncated matrix sum together with the number of terms used."""
    value: np.ndarray
    terms: int


@dataclass(frozen=True)
class PearsonData:
    """Coefficients of Phi(x) = x^2 K2 + x K1 + K0 and Psi(x) = x J1 + J0."""
    K2: np.ndarray
    K1: np.ndarray
    K0: np.ndarray
    J1: np.ndarray
    J0: np.ndarray

    def phi(self, x):
        return x * x * self.K2 + x * self.K1 + self.K0

    def psi(self, x):
        return x * self.J1 + self.J0


@dataclass(frozen=True)
class GridCell:
    """One parameter point of a verification run; families lists the dual
    families checked there (family 3 only when lam >= 1)."""
    N: int
    a: float
    lam: int
    families: tuple
    n_max: int
    x_max: int
    trunc_eps: float
    tol: float
    max_terms: int = DEFAULT_MAX_TERMS
    dual_max_terms: int = DEFAULT_DUAL_MAX_TERMS


@dataclass
class ResidualRow:
    """One line of a verification report."""
    identity: str
    N: int
    a: float
    lam: int
    family: Optional[int]
    residual: Optional[float]
    tolerance: float
    status: str
    detail: str = ""


@dataclass
class BenchRow:
    """Timings of the polynomial evaluation routes for one (n, x) cell."""
    n: int
    x: int
    explicit_s: float
    rodrigues_s: Optional[float]
    oracle_s: Optional[float]
    max_disagreement: float
    extra: dict = field(default_factory=dict)


def rows_to_dicts(rows):
    """Converts dataclass rows to JSON-serializable dictionaries."""
    return [asdict(row) for row in rows]
