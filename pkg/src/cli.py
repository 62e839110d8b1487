"""
Command-line interface for the matrix Charlier toolkit.

Usage:
    charlier table --N 2 --a 1 --lambda 0 --n-max 4   # P_n(x), H_n, B_n, C_n, rho, Upsilon, U, dual norms
    charlier verify                                  # every identity over the configured grid
    charlier verify --N 3 --a 2.5 --lambda 1 --family 2
    charlier bench --n-max 5 --format csv            # timings of the three P_n routes

Exit codes: 0 all checks pass, 1 tolerance failures (or an unwritable output),
2 a truncated sum did not converge, 64 usage errors.
"""
import logging
import sys

import click

from src.benchmark import run_bench
from src.colors import GREEN, RED, YELLOW, paint
from src.config_loader import (grid_axes, load_app_config, resolve_run_config, truncation_caps)
from src.constants import ExitCode
from src.data_models import Truncation
from src.exceptions import DomainError, UsageError
from src.matrix_core import build_params
from src.reporting import build_tables, serialize_rows, serialize_tables, write_output
from src.verification import build_grid, exit_code_for, families_for, run_grid, summarize

__all__ = [
    "cli",
]


def fail(message, code):
    click.echo(paint(f"Error: {message}", RED), err=True)
    logging.error(message)
    sys.exit(code)


class CharlierGroup(click.Group):
    """click group whose parse errors exit with the usage code 64."""

    def main(self, *args, **kwargs):
        kwargs["standalone_mode"] = False
        try:
            code = super().main(*args, **kwargs)
        except click.exceptions.Abort:
            click.echo("Aborted.", err=True)
            sys.exit(ExitCode.TOLERANCE_FAILURE)
        except click.ClickException as e:
            fail(e.format_message(), ExitCode.USAGE)
        sys.exit(code if isinstance(code, int) else ExitCode.ALL_PASS)


def run_options(func):
    """Flags shared by every subcommand."""
    options = [
        click.option('--N', 'N', type=int, default=None, help='Matrix size N >= 2'),
        click.option('--a', 'a', type=float, default=None, help='Poisson parameter a > 0'),
        click.option('--lambda', 'lam', type=int, default=None, help='Family parameter lambda >= 0'),
        click.option('--n-max', 'n_max', type=int, default=None, help='Largest degree (<= 64)'),
        click.option('--x-max', 'x_max', type=int, default=None, help='Largest support point (<= 64)'),
        click.option('--family', 'family', type=int, default=None, help='Dual family 1, 2 or 3'),
        click.option('--tol', 'tol', type=float, default=None, help='Residual tolerance (default 1e-8)'),
        click.option('--trunc-eps', 'trunc_eps', type=float, default=None,
                     help='Relative tail threshold of truncated sums (default 1e-14)'),
        click.option('--format', 'fmt', type=click.Choice(['json', 'csv']), default=None,
                     help='Output format (default json)'),
        click.option('--out', 'out', type=click.Path(dir_okay=False), default=None,
                     help='Output file (default stdout)'),
        click.option('--config', 'config_file', type=click.Path(), default=None,
                     help='key=value file with the same keys; flags override it'),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _resolve(ctx, command, config_file, flags):
    flags = dict(flags)
    flags["format"] = flags.pop("fmt", None)
    try:
        return resolve_run_config(ctx.obj["app_config"], command, config_file, flags)
    except UsageError as e:
        fail(str(e), ExitCode.USAGE)


def _emit(text, out):
    try:
        stdout_text = write_output(text, out)
    except OSError as e:
        fail(f"Could not write '{out}': {e}", ExitCode.TOLERANCE_FAILURE)
    if stdout_text is not None:
        click.echo(stdout_text)


@click.group(cls=CharlierGroup)
@click.version_option(version="1.0.0", prog_name="charlier")
@click.pass_context
def cli(ctx):
    """
    Matrix-valued Charlier polynomials, their duals and the identities they satisfy.

    Examples:

        charlier table --N 2 --a 1 --lambda 0 --n-max 4

        charlier verify --tol 1e-8 --workers 4

        charlier bench --format csv --out bench.csv
    """
    try:
        ctx.obj = {"app_config": load_app_config()}
    except RuntimeError as e:
        fail(str(e), ExitCode.USAGE)


@cli.command()
@run_options
@click.pass_context
def table(ctx, config_file, **flags):
    """
    Emit P_n(x), H_n, B_n, C_n, rho_i(n), Upsilon_i(x), U(n) and the dual norms.

    Without --family every dual family valid at lambda is included.
    """
    cfg = _resolve(ctx, "table", config_file, flags)
    try:
        p = build_params(cfg.N, cfg.a, cfg.lam)
        tables = build_tables(p, cfg.n_max, cfg.x_max, families_for(cfg.lam, cfg.family))
    except DomainError as e:
        fail(str(e), ExitCode.USAGE)
    _emit(serialize_tables(tables, cfg.format), cfg.out)
    return ExitCode.ALL_PASS


@cli.command()
@run_options
@click.option('--workers', 'workers', type=int, default=None,
              help='Process pool size (default: all CPUs, 1 runs in-process)')
@click.pass_context
def verify(ctx, config_file, **flags):
    """
    Check every identity over the parameter grid.

    A flag among --N, --a, --lambda pins that axis; the others come from
    verify_grid in the configuration.
    """
    app_config = ctx.obj["app_config"]
    cfg = _resolve(ctx, "verify", config_file, flags)
    max_terms, dual_max_terms = truncation_caps(app_config)
    try:
        Ns, As, lams = grid_axes(app_config, cfg)
        cells = build_grid(Ns, As, lams, cfg.n_max, cfg.x_max, cfg.tol, cfg.trunc_eps, cfg.family,
                           max_terms=max_terms, dual_max_terms=dual_max_terms)
    except (UsageError, DomainError) as e:
        fail(str(e), ExitCode.USAGE)
    logging.info(f"Verifying {len(cells)} grid cells (workers: {cfg.workers or 'all CPUs'})")
    rows = run_grid(cells, cfg.workers)
    code = exit_code_for(rows)
    summary = dict(summarize(rows), exit_code=code, cells=len(cells))
    _emit(serialize_rows(rows, cfg.format, summary), cfg.out)

    color = GREEN if code == ExitCode.ALL_PASS else (YELLOW if code == ExitCode.NO_CONVERGE else RED)
    click.echo(paint(f"{summary['pass']} pass, {summary['fail']} fail, "
                     f"{summary['no-converge']} no-converge over {len(cells)} cells", color), err=True)
    if code != ExitCode.ALL_PASS:
        logging.error(f"Verification finished with exit code {code}")
    return code


@cli.command()
@run_options
@click.pass_context
def bench(ctx, config_file, **flags):
    """
    Time the explicit, Rodrigues and oracle routes to P_n(x).

    Reports cold and warm xi-cache timings and whether the routes agree.
    """
    app_config = ctx.obj["app_config"]
    cfg = _resolve(ctx, "bench", config_file, flags)
    repeats = int(app_config.get("bench", {}).get("repeats", 3))
    try:
        p = build_params(cfg.N, cfg.a, cfg.lam)
    except DomainError as e:
        fail(str(e), ExitCode.USAGE)
    max_terms, _ = truncation_caps(app_config)
    t = Truncation(eps=cfg.trunc_eps, max_terms=max_terms) if max_terms else Truncation(eps=cfg.trunc_eps)
    rows = run_bench(p, cfg.n_max, cfg.x_max, cfg.tol, t, repeats)
    summary = {"N": p.N, "a": p.a, "lambda": p.lam, "repeats": repeats,
               "all_agree": all(row.extra["agree"] for row in rows)}
    _emit(serialize_rows(rows, cfg.format, summary), cfg.out)
    return ExitCode.ALL_PASS
