from enum import Enum


class ExitCode:
    ALL_PASS = 0
    TOLERANCE_FAILURE = 1
    NO_CONVERGE = 2
    USAGE = 64


class RowStatus:
    PASS = "pass"
    FAIL = "fail"
    NO_CONVERGE = "no-converge"


class VariableSide(Enum):
    SCALAR = "scalar"
    LEFT_MATRIX = "left-matrix"
    RIGHT_MATRIX = "right-matrix"


DEFAULT_TRUNC_EPS = 1e-14
DEFAULT_MAX_TERMS = 400
DEFAULT_DUAL_MAX_TERMS = 300
CONSECUTIVE_SMALL_TERMS = 3

GRID_CAP = 64
ORACLE_CONDITION_LIMIT = 1e12
ORACLE_MAX_DEGREE = 12
RODRIGUES_MAX_DEGREE = 6
SIGNIFICANT_DIGITS = 17

# shared per-model caches, least recently used evicted first
FAMILY_CACHE_SIZE = 32
DUAL_CACHE_SIZE = 3 * FAMILY_CACHE_SIZE
