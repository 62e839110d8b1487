"""Identity registry behind `verify`.

Every check maps a model (and, for per-family checks, a dual family index)
to its largest residual over the ranges allowed by a grid cell. run_cell turns
the registry into ResidualRow objects for one cell; run_grid fans cells out to
a process pool and merges the rows in sorted order.
"""
import logging
import multiprocessing as mp
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from src.constants import ExitCode, RowStatus
from src.data_models import DualHahnParams, GridCell, ResidualRow, Truncation
from src.exceptions import ConvergenceError, DomainError, OracleError
from src import duality as dl
from src import matrix_core as mc
from src import mvop as mv
from src import operators as ops
from src import scalar_classical as sc
from src import weight as wt
from src.matrix_core import ModelParams, build_params, residual

EQUIVALENCE_SEED = 20240917


@dataclass(frozen=True)
class IdentityCheck:
    """One named identity.

    Attributes:
        name (str): Identity id shown in the report.
        evaluate (callable): (params, cell, family index or None) -> residual.
        factor (float): Multiplier applied to the cell tolerance.
        per_family (bool): Evaluated once per dual family of the cell.
        min_lam (int): Skipped below this lambda.
        only_n2 (bool): Skipped unless N = 2.
        max_N (int): Skipped above this N when set.
    """
    name: str
    evaluate: Callable
    factor: float = 1.0
    per_family: bool = False
    min_lam: int = 0
    only_n2: bool = False
    max_N: Optional[int] = None

    def applies(self, p: ModelParams):
        if p.lam < self.min_lam or (self.only_n2 and p.N != 2):
            return False
        return self.max_N is None or p.N <= self.max_N


def _worst(values):
    return max((float(v) for v in values), default=0.0)


def _relative(lhs, rhs):
    """max|lhs - rhs| / max(max|lhs|, max|rhs|) for arrays or scalars."""
    lhs, rhs = np.asarray(lhs, dtype=float), np.asarray(rhs, dtype=float)
    scale = max(float(np.max(np.abs(lhs))), float(np.max(np.abs(rhs))), 1e-300)
    return float(np.max(np.abs(lhs - rhs))) / scale


def _grid(n_top, x_top):
    return [(n, x) for n in range(n_top + 1) for x in range(x_top + 1)]


def _truncation(cell: GridCell):
    return Truncation(eps=cell.trunc_eps, max_terms=cell.max_terms)


def _dual_truncation(cell: GridCell):
    return Truncation(eps=cell.trunc_eps, max_terms=cell.dual_max_terms)


def _basis(cell: GridCell):
    return min(cell.n_max, ops.BASIS_DEGREE), min(cell.x_max, ops.BASIS_POINTS)


# scalar families

def _scalar_shifts(p, cell, i):
    top_n, top_x = min(cell.n_max, 12), min(cell.x_max, 12)
    return _worst(max(sc.charlier_shift_residuals(n, p.a, x)) for n, x in _grid(top_n, top_x))


def _scalar_difference(p, cell, i):
    top_n, top_x = min(cell.n_max, 12), min(cell.x_max, 12)
    return _worst(sc.charlier_difference_residual(n, p.a, x) for n, x in _grid(top_n, top_x))


def _scalar_self_duality(p, cell, i):
    top = min(cell.n_max, 12)
    return _worst(sc.charlier_self_duality_residual(n, m, p.a) for n, m in _grid(top, top))


def _scalar_convolution(p, cell, i):
    return _worst(sc.charlier_convolution_residual(n, p.a, x)
                  for n, x in _grid(min(cell.n_max, 10), min(cell.x_max, 10)))


def _scalar_generating(p, cell, i):
    return _worst(sc.charlier_generating_residual(x, p.a, 0.5) for x in range(min(cell.x_max, 6) + 1))


def _scalar_orthogonality(p, cell, i):
    top = min(cell.n_max, 6)
    return _worst(sc.charlier_orthogonality_residual(n, m, p.a) for n, m in _grid(top, top))


def _dual_hahn_orthogonality(p, cell, i):
    # delta = N - s on sizes 1..8 and delta = s - N on size N - 1, as in the xi branches
    pairs = {(big_n, delta) for big_n in range(1, 9) for delta in range(p.N)}
    pairs |= {(p.N - 1, delta) for delta in range(min(cell.n_max, 8) + 1)}
    return _worst(sc.dual_hahn_orthogonality_worst(DualHahnParams(gamma=p.lam, delta=delta, bigN=big_n))
                  for big_n, delta in sorted(pairs))


# matrix core and weight

def _structural(p, cell, i):
    return ops.structural_commutators(p)


def _matL_structure(p, cell, i):
    return _worst(mc.matL_structure_residual(p, x) for x in range(-5, 16))


def _conjugations(p, cell, i):
    return _worst(max(mc.conjugation_residuals(p, x, k)) for x in range(-5, 16) for k in (-3, -1, 1, 2, 3))


def _script_A_finite(p, cell, i):
    finite = all(np.all(np.isfinite(mc.scaled_script_A_pow(p, n))) for n in range(cell.n_max + 1))
    return 0.0 if finite else 1.0


def _gauge(p, cell, i):
    return _worst(mv.gauge_residual(p, n, x) for n, x in _grid(min(cell.n_max, 5), min(cell.x_max, 5)))


def _strong_pearson(p, cell, i):
    return _worst(max(wt.strong_pearson_residual(p, x)) for x in range(cell.x_max + 1))


def _weak_pearson(p, cell, i):
    return _worst(wt.weak_pearson_residual(p, x) for x in range(1, cell.x_max + 1))


def _pearson_degree(p, cell, i):
    return _worst(wt.pearson_degree_residual(p, x) for x in range(cell.x_max + 1))


def _iterated_weight(p, cell, i):
    return _worst(_relative(wt.iterated_weight(p, x), wt.weight(p, x)) for x in range(cell.x_max + 1))


def _pearson_closed(p, cell, i):
    data = wt.pearson(p)
    return _worst(max(residual(wt.phi_star_conjugated(p, x), data.phi(x).T),
                      residual(wt.phi_minus_psi_star(p, x), (data.phi(x) - data.psi(x)).T))
                  for x in range(cell.x_max + 1))


def _difference_calculus(p, cell, i):
    family = mv.family_for(p)
    top, upper = min(cell.n_max, 3), min(cell.x_max, 6)
    worst = 0.0
    for n in range(top + 1):
        F, G = family.polynomial(n), family.polynomial(top - n)
        worst = max(worst, wt.summation_by_parts_residual(F, G, upper))
        worst = max(worst, _worst(wt.leibniz_residual(F, lambda x: wt.weight(p, x), x)
                                  for x in range(upper + 1)))
    return worst


# polynomials

def _golden(p, cell, i):
    family = mv.family_for(p)
    worst = _worst(residual(family.p_eval(n, x), mv.two_by_two_display(p, n, x))
                   for n, x in _grid(min(cell.n_max, 8), cell.x_max))
    at_zero = _worst(residual(family.p_at_zero(n), mv.two_by_two_at_zero(p, n))
                     for n in range(1, cell.n_max + 1))
    return max(worst, at_zero)


def _p_at_zero(p, cell, i):
    return _worst(mv.p_at_zero_residual(p, n) for n in range(cell.n_max + 1))


def _xi_k(p, cell, i):
    family = mv.family_for(p)
    return _worst(mv.xi_k_recursion_residual(p, j, n, family.xi_table(n))
                  for n in range(cell.n_max + 1) for j in range(1, p.N + 1))


def _xi_j(p, cell, i):
    family = mv.family_for(p)
    return _worst(mv.xi_j_recursion_residual(p, n, family.xi_table(n)) for n in range(cell.n_max + 1))


def _xi_branches(p, cell, i):
    return _worst(mv.xi_branch_gap(p, j, k, p.N - j) for j in range(1, p.N + 1) for k in range(1, p.N + 1))


def _xi_endpoints(p, cell, i):
    family = mv.family_for(p)
    worst = 0.0
    for n in range(cell.n_max + 1):
        first, last = mv.xi_endpoints(p, n)
        table = family.xi_table(n)
        worst = max(worst, _relative(table[0, 0], first), _relative(table[p.N - 1, 0], last))
    return worst


def _r_difference(p, cell, i):
    family = mv.family_for(p)
    return _worst(mv.r_difference_residual(p, n, x, family.xi_table(n)) for n, x in _grid(cell.n_max, cell.x_max))


def _r_at_zero(p, cell, i):
    return _worst(mv.r_zero_recursion_residual(p, n) for n in range(1, cell.n_max + 1))


def _mixed_difference(p, cell, i):
    return _worst(mv.mixed_difference_residual(p, n, x)
                  for n in range(1, cell.n_max + 1) for x in range(cell.x_max + 1))


def _norm_routes(p, cell, i):
    return _worst(mv.norm_d_routes_residual(p, n) for n in range(cell.n_max + 1))


def _norm_chain(p, cell, i):
    return _worst(mv.norm_chain_residual(p, n) for n in range(min(cell.n_max, 5) + 1))


def _nonlinear_norms(p, cell, i):
    return _worst(mv.nonlinear_norm_residual(p, n) for n in range(1, cell.n_max + 1))


def _orthogonality(p, cell, i):
    top = min(cell.n_max, 10)
    t = _truncation(cell)
    return _worst(mv.orthogonality_residual(p, n, m, t) for n in range(top + 1) for m in range(n + 1))


def _recurrence(p, cell, i):
    return _worst(mv.recurrence_residual(p, n, x) for n, x in _grid(cell.n_max, cell.x_max))


def _b_symmetry(p, cell, i):
    return _worst(mv.rec_b_symmetry_residual(p, n) for n in range(cell.n_max + 1))


def _b_routes(p, cell, i):
    return _worst(mv.rec_b_routes_residual(p, n) for n in range(cell.n_max + 1))


def _c_closed(p, cell, i):
    return _worst(mv.rec_c_residual(p, n) for n in range(cell.n_max + 1))


def _shifts(p, cell, i):
    return _worst(max(mv.shift_residuals(p, n, x)) for n, x in _grid(cell.n_max, cell.x_max))


def _g_routes(p, cell, i):
    return _worst(mv.shift_g_routes_residual(p, n) for n in range(1, cell.n_max + 1))


def _delta_s_adjoint(p, cell, i):
    top = min(cell.n_max, 3)
    t = _truncation(cell)
    return _worst(mv.delta_s_adjoint_residual(p, n, m, t) for n, m in _grid(top, top))


def _eigen(p, cell, i):
    return _worst(max(mv.eigen_residuals(p, n, x).values()) for n, x in _grid(cell.n_max, cell.x_max))


def _darboux(p, cell, i):
    return _worst(mv.darboux_residual(p, n, x) for n, x in _grid(cell.n_max, cell.x_max))


def _rodrigues(p, cell, i):
    return _worst(mv.rodrigues_residual(p, n, x) for n, x in _grid(min(cell.n_max, 5), min(cell.x_max, 6)))


def _oracle(p, cell, i):
    return mv.oracle_residual(p, min(cell.n_max, 8), _truncation(cell))


# operator algebra

def _psi_recurrence(p, cell, i):
    family = mv.family_for(p)
    return ops.psi_residual(ops.recurrence_op(family), ops.x_op(p), family, *_basis(cell))


def _psi_ladder(p, cell, i):
    family = mv.family_for(p)
    return ops.psi_residual(ops.ladder_m(family), ops.raising_op(p), family, *_basis(cell))


def _psi_ladder_dagger(p, cell, i):
    family = mv.family_for(p)
    return ops.psi_residual(ops.ladder_m_dagger(family), ops.lowering_op(p), family, *_basis(cell))


def _psi_jfrak(p, cell, i):
    family = mv.family_for(p)
    explicit = ops.psi_inverse_jfrak(family)
    return max(ops.psi_residual(explicit, ops.jfrak_op(p), family, *_basis(cell)),
               ops.left_operator_gap(explicit, ops.psi_inverse_jfrak_from_ladders(family), family, *_basis(cell)))


def _psi_eigen(p, cell, i):
    family = mv.family_for(p)
    pairs = [(ops.gamma_op(family), ops.dfrak_op(p)), (ops.delta_s_eigen_op(family), ops.delta_s_op(p))]
    if p.lam >= 1:
        pairs.append((ops.s_delta_eigen_op(family), ops.s_delta_op(p)))
    return _worst(ops.psi_residual(M, D, family, *_basis(cell)) for M, D in pairs)


def _psi_product(p, cell, i):
    family = mv.family_for(p)
    M = ops.compose_left(ops.ladder_m(family), ops.ladder_m_dagger(family))
    D = ops.compose_right(ops.raising_op(p), ops.lowering_op(p))
    return ops.psi_residual(M, D, family, *_basis(cell))


def _adjoint(p, cell, i):
    family = mv.family_for(p)
    computed = ops.adjoint_left(ops.ladder_m(family), family.norm_h)
    return ops.left_operator_gap(computed, ops.ladder_m_dagger(family), family, *_basis(cell))


def _lie(p, cell, i):
    return _worst(ops.lie_checks(mv.family_for(p), *_basis(cell)).values())


def _ladder_at_zero(p, cell, i):
    family = mv.family_for(p)
    return _worst(ops.ladder_at_zero_residual(family, n) for n in range(cell.n_max + 1))


def _lowering_at_zero(p, cell, i):
    generators = [ops.dfrak_op(p), ops.delta_s_op(p)]
    if p.lam >= 1:
        generators.append(ops.s_delta_op(p))
    return _worst(ops.lowering_coefficient_at_zero(D) for D in generators)


# dual families

def _rho3(p, cell, i):
    return _worst(dl.rho3_relation_residual(p, n) for n in range(cell.n_max + 1))


def _rho_2x2(p, cell, i):
    return _worst(residual(dl.rho(p, 1, n), dl.rho_two_by_two(p, n)) for n in range(cell.n_max + 1))


def _dual_weight(p, cell, i):
    worst = _worst(_relative(dl.dual_weight_u(p, n), dl.dual_weight_u_from_norms(p, n))
                   for n in range(cell.n_max + 1))
    if p.N == 2:
        worst = max(worst, _worst(_relative(dl.dual_weight_conjugated(p, n), dl.dual_weight_two_by_two(p, n))
                                  for n in range(cell.n_max + 1)))
    return worst


def _dualdual_first(p, cell, i):
    return _worst(dl.dualdual_first_residual(p, n, x) for n, x in _grid(cell.n_max, cell.x_max))


def _dualdual_second(p, cell, i):
    return _worst(dl.dualdual_second_residual(p, n, x) for n, x in _grid(min(cell.n_max, 8), cell.x_max))


def _dualdual_coeffs(p, cell, i):
    worst = 0.0
    for n in range(cell.n_max + 1):
        B, C = dl.dualdual_coeffs(p, n)
        B_norms, C_norms = dl.dualdual_coeffs_from_norms(p, n)
        worst = max(worst, residual(B, B_norms), residual(C, C_norms))
    return worst


def _q_duality(p, cell, i):
    return _worst(dl.duality_residual(p, i, n, x) for n, x in _grid(min(cell.n_max, 10), min(cell.x_max, 8)))


def _q_recurrence_vs_eval(p, cell, i):
    return _worst(dl.q_recurrence_residual(p, i, n, x) for n, x in _grid(min(cell.n_max, 10), min(cell.x_max, 8)))


def _rho_closed(p, cell, i):
    dual = dl.dual_for(p, i)
    return _worst(residual(dual.rho(n), dual.rho_by_conjugation(n)) for n in range(cell.n_max + 1))


def _upsilon_closed(p, cell, i):
    dual = dl.dual_for(p, i)
    return _worst(_relative(dual.upsilon(x), dual.upsilon_product(x)) for x in range(cell.x_max + 1))


def _dual_orthogonality(p, cell, i):
    top = min(cell.x_max, 3)
    t = _dual_truncation(cell)
    norms = [dl.dual_norm(p, i, x) for x in range(top + 1)]
    worst = 0.0
    for x, y in _grid(top, top):
        gram = dl.dual_inner_product(p, i, x, y, t).value
        target = norms[x] if x == y else np.zeros_like(gram)
        scale = max(float(np.max(np.abs(norms[x]))), float(np.max(np.abs(norms[y]))))
        worst = max(worst, float(np.max(np.abs(gram - target))) / scale)
    return worst


def _vandermonde_formula(p, cell, i):
    return _worst(dl.vandermonde_formula_residual(p, i, x, nu)
                  for x in range(1, min(cell.x_max, 3) + 1) for nu in range(9))


def _vandermonde_nonzero(p, cell, i):
    smallest = min(dl.vandermonde_condition(p, i, x, nu) for x in range(1, min(cell.x_max, 3) + 1) for nu in range(9))
    return 0.0 if smallest > 0 else 1.0


def _dual_shift(p, cell, i):
    return _worst(dl.dual_shift_residual(p, i, x, n) for n, x in _grid(min(cell.n_max, 8), min(cell.x_max, 8)))


def _sigma_transport(p, cell, i):
    generators = [ops.raising_op(p), ops.lowering_op(p), ops.jfrak_op(p), ops.dfrak_op(p)]
    cells = _grid(min(cell.n_max, 6), min(cell.x_max, 6))
    return _worst(dl.sigma_residual(p, i, D, n, x) for D in generators for n, x in cells)


def _commuting_square(p, cell, i):
    family = mv.family_for(p)
    pairs = [(ops.ladder_m(family), ops.raising_op(p)),
             (ops.ladder_m_dagger(family), ops.lowering_op(p)),
             (ops.gamma_op(family), ops.dfrak_op(p)),
             (ops.psi_inverse_jfrak(family), ops.jfrak_op(p)),
             (ops.recurrence_op(family), ops.x_op(p))]
    cells = _grid(min(cell.n_max, 6), min(cell.x_max, 6))
    return _worst(dl.commuting_square_residual(p, i, M, D, n, x) for M, D in pairs for n, x in cells)


def _adjoint_transport(p, cell, i):
    t = _dual_truncation(cell)
    return _worst(dl.adjoint_transport_residual(p, i, x, x + 1, t) for x in range(min(cell.x_max, 2) + 1))


def _christoffel_darboux(p, cell, i):
    top = min(cell.x_max, 3)
    return _worst(dl.christoffel_darboux_residual(p, i, n, x, y)
                  for n in range(min(cell.n_max, 8) + 1) for x, y in _grid(top, top) if x != y)


def _boundary_decay(p, cell, i):
    return dl.boundary_decay(p, i, 0, 1)


def _equivalence(p, cell, i):
    rng = np.random.default_rng(EQUIVALENCE_SEED)
    R = p.I + 0.3 * rng.normal(size=(p.N, p.N))
    return _worst(dl.equivalence_residual(p, i, R, x, n) for n, x in _grid(min(cell.n_max, 5), min(cell.x_max, 3)))


CHECKS = (
    IdentityCheck("scalar.charlier_shifts", _scalar_shifts),
    IdentityCheck("scalar.charlier_difference", _scalar_difference),
    IdentityCheck("scalar.self_duality", _scalar_self_duality),
    IdentityCheck("scalar.convolution", _scalar_convolution),
    IdentityCheck("scalar.generating_function", _scalar_generating),
    IdentityCheck("scalar.poisson_orthogonality", _scalar_orthogonality),
    IdentityCheck("scalar.dual_hahn_orthogonality", _dual_hahn_orthogonality),
    IdentityCheck("core.structural_commutators", _structural),
    IdentityCheck("core.matL_structure", _matL_structure),
    IdentityCheck("core.conjugations", _conjugations),
    IdentityCheck("core.script_A_finite", _script_A_finite),
    IdentityCheck("core.gauge_invariance", _gauge),
    IdentityCheck("weight.strong_pearson", _strong_pearson),
    IdentityCheck("weight.weak_pearson", _weak_pearson),
    IdentityCheck("weight.pearson_degree", _pearson_degree),
    IdentityCheck("weight.iterated", _iterated_weight),
    IdentityCheck("weight.pearson_closed", _pearson_closed),
    IdentityCheck("weight.difference_calculus", _difference_calculus),
    IdentityCheck("mvop.golden_2x2", _golden, only_n2=True),
    IdentityCheck("mvop.p_at_zero", _p_at_zero),
    IdentityCheck("mvop.xi_k_recursion", _xi_k),
    IdentityCheck("mvop.xi_j_recursion", _xi_j),
    IdentityCheck("mvop.xi_branches", _xi_branches),
    IdentityCheck("mvop.xi_endpoints", _xi_endpoints),
    IdentityCheck("mvop.r_difference", _r_difference),
    IdentityCheck("mvop.r_at_zero", _r_at_zero),
    IdentityCheck("mvop.mixed_difference", _mixed_difference),
    IdentityCheck("mvop.norms_ldu", _norm_routes),
    IdentityCheck("mvop.norm_chain", _norm_chain),
    IdentityCheck("mvop.nonlinear_norms", _nonlinear_norms),
    IdentityCheck("mvop.orthogonality", _orthogonality),
    IdentityCheck("mvop.recurrence", _recurrence),
    IdentityCheck("mvop.b_symmetry", _b_symmetry),
    IdentityCheck("mvop.b_routes", _b_routes),
    IdentityCheck("mvop.c_closed", _c_closed),
    IdentityCheck("mvop.shifts", _shifts),
    IdentityCheck("mvop.g_routes", _g_routes),
    IdentityCheck("mvop.delta_s_adjoint", _delta_s_adjoint),
    IdentityCheck("mvop.eigen", _eigen),
    IdentityCheck("mvop.darboux", _darboux, min_lam=1),
    IdentityCheck("mvop.rodrigues", _rodrigues),
    IdentityCheck("mvop.oracle", _oracle),
    IdentityCheck("operators.psi_recurrence", _psi_recurrence),
    IdentityCheck("operators.psi_ladder", _psi_ladder),
    IdentityCheck("operators.psi_ladder_dagger", _psi_ladder_dagger),
    IdentityCheck("operators.psi_jfrak", _psi_jfrak),
    IdentityCheck("operators.psi_eigen", _psi_eigen),
    IdentityCheck("operators.psi_product", _psi_product),
    IdentityCheck("operators.adjoint", _adjoint),
    IdentityCheck("operators.lie", _lie, factor=0.01),
    IdentityCheck("operators.ladder_at_zero", _ladder_at_zero),
    IdentityCheck("operators.lowering_at_zero", _lowering_at_zero),
    IdentityCheck("duality.rho3_relation", _rho3, min_lam=1),
    IdentityCheck("duality.rho_2x2", _rho_2x2, only_n2=True),
    IdentityCheck("duality.dual_weight", _dual_weight),
    IdentityCheck("dualdual.first", _dualdual_first),
    IdentityCheck("dualdual.second", _dualdual_second),
    IdentityCheck("dualdual.coeff_routes", _dualdual_coeffs),
    IdentityCheck("duality.q_duality", _q_duality, per_family=True),
    IdentityCheck("duality.q_recurrence_vs_eval", _q_recurrence_vs_eval, per_family=True),
    IdentityCheck("duality.rho_closed", _rho_closed, per_family=True),
    IdentityCheck("duality.upsilon_closed", _upsilon_closed, per_family=True),
    IdentityCheck("duality.dual_orthogonality", _dual_orthogonality, factor=100.0, per_family=True),
    IdentityCheck("duality.vandermonde_formula", _vandermonde_formula, per_family=True, max_N=3),
    IdentityCheck("duality.vandermonde_nonzero", _vandermonde_nonzero, per_family=True),
    IdentityCheck("duality.dual_shift", _dual_shift, per_family=True),
    IdentityCheck("duality.sigma_transport", _sigma_transport, per_family=True),
    IdentityCheck("duality.commuting_square", _commuting_square, per_family=True),
    IdentityCheck("duality.adjoint_transport", _adjoint_transport, factor=10.0, per_family=True),
    IdentityCheck("duality.christoffel_darboux", _christoffel_darboux, per_family=True),
    IdentityCheck("duality.boundary_decay", _boundary_decay, per_family=True),
    IdentityCheck("duality.equivalence", _equivalence, per_family=True),
)


def check_names():
    return [check.name for check in CHECKS]


def _row(check: IdentityCheck, cell: GridCell, family, value, status, detail=""):
    return ResidualRow(identity=check.name, N=cell.N, a=cell.a, lam=cell.lam, family=family,
                       residual=value, tolerance=cell.tol * check.factor, status=status, detail=detail)


def evaluate_check(check: IdentityCheck, p: ModelParams, cell: GridCell, family=None):
    """Runs one check and classifies it.

    Returns:
        ResidualRow: pass/fail against cell.tol * factor, or no-converge when a
        truncated sum did not settle.
    """
    tolerance = cell.tol * check.factor
    try:
        value = float(check.evaluate(p, cell, family))
    except ConvergenceError as e:
        logging.warning(f"{check.name} did not converge at N={cell.N}, a={cell.a}, lambda={cell.lam}: {e}")
        return _row(check, cell, family, None, RowStatus.NO_CONVERGE, str(e))
    except (OracleError, DomainError) as e:
        logging.warning(f"{check.name} failed at N={cell.N}, a={cell.a}, lambda={cell.lam}: {e}")
        return _row(check, cell, family, None, RowStatus.FAIL, str(e))
    if np.isfinite(value) and value <= tolerance:
        return _row(check, cell, family, value, RowStatus.PASS)
    return _row(check, cell, family, value if np.isfinite(value) else None, RowStatus.FAIL,
                "" if np.isfinite(value) else "non-finite residual")


def run_cell(cell: GridCell):
    """All applicable checks for one grid cell, in registry order."""
    p = build_params(cell.N, cell.a, cell.lam)
    logging.info(f"Verifying N={cell.N}, a={cell.a}, lambda={cell.lam}, families={cell.families}")
    rows = []
    for check in CHECKS:
        if not check.applies(p):
            continue
        if check.per_family:
            rows.extend(evaluate_check(check, p, cell, i) for i in cell.families)
        else:
            rows.append(evaluate_check(check, p, cell))
    return rows


def families_for(lam, family=None):
    """Dual families checked at lam: the requested one, else all that apply."""
    if family is not None:
        return (family,)
    return (1, 2, 3) if lam >= 1 else (1, 2)


def build_grid(Ns, As, lams, n_max, x_max, tol, trunc_eps, family=None,
               max_terms=None, dual_max_terms=None):
    """Cells of the cartesian grid; lambda values below 1 are dropped when
    family 3 alone is requested."""
    caps = {}
    if max_terms is not None:
        caps["max_terms"] = max_terms
    if dual_max_terms is not None:
        caps["dual_max_terms"] = dual_max_terms
    cells = []
    for N in Ns:
        for a in As:
            for lam in lams:
                if family == 3 and lam < 1:
                    continue
                cells.append(GridCell(N=int(N), a=float(a), lam=int(lam), families=families_for(lam, family),
                                      n_max=n_max, x_max=x_max, trunc_eps=trunc_eps, tol=tol, **caps))
    return cells


def _sort_key(row: ResidualRow):
    return (row.identity, row.N, row.a, row.lam, row.family or 0)


def run_grid(cells, workers=None):
    """Rows for every cell, sorted by (identity, N, a, lambda, family).

    Args:
        cells (list): GridCell objects.
        workers (int): Process pool size, capped by the CPU and cell counts.
            None uses every CPU; 1 runs in this process.
    """
    available = mp.cpu_count()
    processes = min(available if workers is None else min(workers, available), len(cells))
    if processes > 1:
        logging.info(f"Running {len(cells)} grid cells on {processes} processes")
        with mp.Pool(processes) as pool:
            per_cell = pool.map(run_cell, cells)
    else:
        per_cell = [run_cell(cell) for cell in cells]
    rows = [row for chunk in per_cell for row in chunk]
    return sorted(rows, key=_sort_key)


def exit_code_for(rows):
    """NO_CONVERGE if any row did not converge, else TOLERANCE_FAILURE if any failed."""
    statuses = {row.status for row in rows}
    if RowStatus.NO_CONVERGE in statuses:
        return ExitCode.NO_CONVERGE
    if RowStatus.FAIL in statuses:
        return ExitCode.TOLERANCE_FAILURE
    return ExitCode.ALL_PASS


def summarize(rows):
    """Counts per status."""
    counts = {RowStatus.PASS: 0, RowStatus.FAIL: 0, RowStatus.NO_CONVERGE: 0}
    for row in rows:
        counts[row.status] = counts.get(row.status, 0) + 1
    return counts
