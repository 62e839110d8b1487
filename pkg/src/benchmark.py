"""Wall-time comparison of the three routes to P_n(x): interpolated xi
entries, the Rodrigues formula and the Gram-Schmidt oracle."""
import logging
import time

import numpy as np

from src.constants import ORACLE_MAX_DEGREE, RODRIGUES_MAX_DEGREE
from src.data_models import BenchRow, Truncation
from src.exceptions import OracleError
from src.matrix_core import ModelParams, residual
from src.mvop import MVOPFamily, gram_schmidt_oracle, rodrigues_eval


def _timed(compute, repeats):
    """(last value, best wall time in seconds) over repeats runs."""
    best, value = None, None
    for _ in range(repeats):
        start = time.perf_counter()
        value = compute()
        elapsed = time.perf_counter() - start
        best = elapsed if best is None else min(best, elapsed)
    return value, best


def bench_cell(p: ModelParams, n, x, t: Truncation, repeats=3):
    """Times every applicable route at (n, x).

    The explicit route is timed twice: on a fresh family (cold xi cache) and
    again on the same family (warm). extra carries both timings, the cache
    counters and whether the routes agree.
    """
    cold_family = MVOPFamily(p)
    start = time.perf_counter()
    explicit = cold_family.p_eval(n, x)
    cold = time.perf_counter() - start
    _, warm = _timed(lambda: cold_family.p_eval(n, x), repeats)

    gaps = []
    rodrigues_s = oracle_s = None
    if n <= RODRIGUES_MAX_DEGREE:
        value, rodrigues_s = _timed(lambda: rodrigues_eval(p, n, x), repeats)
        gaps.append(residual(value, explicit))
    if n <= ORACLE_MAX_DEGREE:
        try:
            basis, oracle_s = _timed(lambda: gram_schmidt_oracle(p, n, t), repeats)
            gaps.append(residual(basis[n](x), explicit))
        except OracleError as e:
            logging.warning(f"Oracle route skipped at n={n}: {e}")
    extra = {"explicit_cold_s": cold, "explicit_warm_s": warm, "xi_cache": cold_family.cache_info()["xi"]}
    return BenchRow(n=n, x=x, explicit_s=warm, rodrigues_s=rodrigues_s, oracle_s=oracle_s,
                    max_disagreement=max(gaps, default=0.0), extra=extra)


def run_bench(p: ModelParams, n_max, x_max, tol, t: Truncation = None, repeats=3):
    """BenchRow per (n, x) with n <= n_max, x <= x_max; extra["agree"] flags
    agreement of the routes within tol."""
    t = t or Truncation()
    rows = []
    for n in range(n_max + 1):
        for x in range(x_max + 1):
            row = bench_cell(p, n, x, t, repeats)
            row.extra["agree"] = bool(np.isfinite(row.max_disagreement) and row.max_disagreement <= tol)
            if not row.extra["agree"]:
                logging.warning(f"Routes disagree at n={n}, x={x}: {row.max_disagreement:.3e}")
            rows.append(row)
    logging.info(f"Benchmarked {len(rows)} cells for N={p.N}, a={p.a}, lambda={p.lam}")
    return rows
