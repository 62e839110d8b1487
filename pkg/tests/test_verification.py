import math
from unittest.mock import MagicMock

import pytest

from src.constants import ExitCode, RowStatus
from src.data_models import GridCell, ResidualRow
from src.exceptions import ConvergenceError, DomainError
from src.matrix_core import build_params
from src.verification import (CHECKS, IdentityCheck, build_grid, check_names, evaluate_check, exit_code_for,
                              families_for, run_cell, run_grid, summarize)


def make_cell(**overrides):
    values = dict(N=2, a=1.0, lam=1, families=(1, 2, 3), n_max=2, x_max=2, trunc_eps=1e-14, tol=1e-8)
    values.update(overrides)
    return GridCell(**values)


def make_row(identity, status=RowStatus.PASS, N=2, family=None):
    return ResidualRow(identity=identity, N=N, a=1.0, lam=1, family=family, residual=0.0,
                       tolerance=1e-8, status=status)


class TestRegistry:
    def test_names_are_unique_and_grouped(self):
        names = check_names()
        assert len(names) == len(set(names))
        prefixes = {name.split(".")[0] for name in names}
        assert prefixes == {"scalar", "core", "weight", "mvop", "operators", "duality", "dualdual"}

    def test_applicability_filters(self):
        darboux = next(c for c in CHECKS if c.name == "mvop.darboux")
        golden = next(c for c in CHECKS if c.name == "mvop.golden_2x2")
        vandermonde = next(c for c in CHECKS if c.name == "duality.vandermonde_formula")
        assert not darboux.applies(build_params(2, 1.0, 0))
        assert darboux.applies(build_params(2, 1.0, 1))
        assert not golden.applies(build_params(3, 1.0, 1))
        assert not vandermonde.applies(build_params(4, 1.0, 1))


class TestEvaluateCheck:
    def test_pass_and_fail(self):
        cell = make_cell()
        p = build_params(2, 1.0, 1)
        passing = evaluate_check(IdentityCheck("t.small", lambda p, c, i: 1e-12), p, cell)
        failing = evaluate_check(IdentityCheck("t.large", lambda p, c, i: 1e-3), p, cell)
        assert passing.status == RowStatus.PASS
        assert failing.status == RowStatus.FAIL
        assert failing.residual == pytest.approx(1e-3)

    def test_factor_scales_tolerance(self):
        row = evaluate_check(IdentityCheck("t.loose", lambda p, c, i: 5e-7, factor=100.0),
                             build_params(2, 1.0, 1), make_cell())
        assert row.tolerance == pytest.approx(1e-6)
        assert row.status == RowStatus.PASS

    def test_no_convergence_has_no_residual(self):
        def diverging(p, cell, i):
            raise ConvergenceError("tail did not settle", partial=None, terms=10)

        row = evaluate_check(IdentityCheck("t.tail", diverging), build_params(2, 1.0, 1), make_cell(), 2)
        assert row.status == RowStatus.NO_CONVERGE
        assert row.residual is None
        assert row.family == 2
        assert "did not settle" in row.detail

    def test_domain_error_and_nan_fail(self):
        def out_of_domain(p, cell, i):
            raise DomainError("bad point")

        p, cell = build_params(2, 1.0, 1), make_cell()
        row = evaluate_check(IdentityCheck("t.domain", out_of_domain), p, cell)
        assert row.status == RowStatus.FAIL and row.detail == "bad point"
        row = evaluate_check(IdentityCheck("t.nan", lambda p, c, i: math.nan), p, cell)
        assert row.status == RowStatus.FAIL
        assert row.residual is None
        assert row.detail == "non-finite residual"


def test_families_for():
    assert families_for(0) == (1, 2)
    assert families_for(2) == (1, 2, 3)
    assert families_for(0, 2) == (2,)


def test_build_grid_drops_small_lambda_for_family_three():
    cells = build_grid([2, 3], [1.0], [0, 1, 2], 3, 3, 1e-8, 1e-14, family=3, max_terms=50)
    assert [(c.N, c.lam) for c in cells] == [(2, 1), (2, 2), (3, 1), (3, 2)]
    assert all(c.families == (3,) for c in cells)
    assert all(c.max_terms == 50 for c in cells)


def test_exit_code_priority():
    assert exit_code_for([make_row("a")]) == ExitCode.ALL_PASS
    assert exit_code_for([make_row("a"), make_row("b", RowStatus.FAIL)]) == ExitCode.TOLERANCE_FAILURE
    rows = [make_row("a", RowStatus.FAIL), make_row("b", RowStatus.NO_CONVERGE)]
    assert exit_code_for(rows) == ExitCode.NO_CONVERGE
    assert exit_code_for([]) == ExitCode.ALL_PASS


def test_summarize_counts_every_status():
    rows = [make_row("a"), make_row("b"), make_row("c", RowStatus.FAIL)]
    assert summarize(rows) == {"pass": 2, "fail": 1, "no-converge": 0}


def test_run_grid_in_process_sorts_rows(mocker):
    cells = [make_cell(N=3), make_cell(N=2)]
    mocker.patch("src.verification.run_cell",
                 side_effect=lambda cell: [make_row("z.last", N=cell.N), make_row("a.first", N=cell.N)])
    rows = run_grid(cells, workers=1)
    assert [(r.identity, r.N) for r in rows] == [("a.first", 2), ("a.first", 3), ("z.last", 2), ("z.last", 3)]


def test_run_grid_uses_process_pool(mocker):
    cells = [make_cell(N=2), make_cell(N=3), make_cell(N=4)]
    mocker.patch("src.verification.mp.cpu_count", return_value=2)
    pool_cls = mocker.patch("src.verification.mp.Pool")
    pool = MagicMock()
    pool.map.return_value = [[make_row("b", N=2)], [make_row("a", N=3)], []]
    pool_cls.return_value.__enter__.return_value = pool
    rows = run_grid(cells, workers=8)
    pool_cls.assert_called_once_with(2)
    pool.map.assert_called_once_with(run_cell, cells)
    assert [r.identity for r in rows] == ["a", "b"]


def test_run_grid_defaults_to_one_process_per_cpu(mocker):
    cells = [make_cell(N=2), make_cell(N=3), make_cell(N=4)]
    mocker.patch("src.verification.mp.cpu_count", return_value=8)
    pool_cls = mocker.patch("src.verification.mp.Pool")
    pool = MagicMock()
    pool.map.return_value = [[], [], []]
    pool_cls.return_value.__enter__.return_value = pool
    run_grid(cells)
    pool_cls.assert_called_once_with(3)


def test_run_grid_single_cpu_stays_in_process(mocker):
    mocker.patch("src.verification.mp.cpu_count", return_value=1)
    pool_cls = mocker.patch("src.verification.mp.Pool")
    mocker.patch("src.verification.run_cell", return_value=[make_row("a")])
    rows = run_grid([make_cell(N=2), make_cell(N=3)])
    pool_cls.assert_not_called()
    assert len(rows) == 2


@pytest.mark.slow
@pytest.mark.integration
def test_process_pool_rows_match_serial_rows(mocker):
    mocker.patch("src.verification.mp.cpu_count", return_value=2)
    cells = [make_cell(n_max=1, x_max=1, families=(1, 2)), make_cell(a=2.5, n_max=1, x_max=1, families=(1, 2))]
    assert run_grid(cells, workers=2) == run_grid(cells, workers=1)


@pytest.mark.slow
@pytest.mark.integration
def test_small_cell_passes_every_identity():
    cell = make_cell()
    rows = run_cell(cell)
    failures = [(r.identity, r.family, r.residual, r.detail) for r in rows if r.status != RowStatus.PASS]
    assert failures == []
    per_family = sum(1 for c in CHECKS if c.per_family)
    assert sum(1 for r in rows if r.family is not None) == 3 * per_family
