import json

import pytest
from click.testing import CliRunner

from src.cli import cli
from src.constants import RowStatus
from src.data_models import ResidualRow


@pytest.fixture
def runner():
    return CliRunner()


def invoke(runner, *args):
    return runner.invoke(cli, list(args), prog_name="charlier")


def make_rows(*statuses):
    return [ResidualRow(f"check.{k}", 2, 1.0, 1, None, 0.0 if s == RowStatus.PASS else None, 1e-8, s)
            for k, s in enumerate(statuses)]


@pytest.mark.integration
class TestTable:
    def test_json_to_file(self, runner, tmp_path):
        out = tmp_path / "table.json"
        result = invoke(runner, "table", "--N", "2", "--a", "1", "--lambda", "0", "--n-max", "1",
                        "--x-max", "1", "--out", str(out))
        assert result.exit_code == 0, result.output
        payload = json.loads(out.read_text())
        assert payload["params"]["families"] == [1, 2]
        b0 = next(r for r in payload["records"] if r["object"] == "B" and r["n"] == 0)
        assert b0["matrix"] == pytest.approx([[0.5, 0.5], [0.0, 2.0]])

    def test_csv_to_stdout(self, runner):
        result = invoke(runner, "table", "--format", "csv", "--n-max", "1", "--x-max", "1", "--family", "1")
        assert result.exit_code == 0, result.output
        assert 'N,a,lambda,object,family,n,x,"(1,1)","(2,1)","(1,2)","(2,2)"' in result.output

    def test_config_file_is_read(self, runner, tmp_path):
        config = tmp_path / "run.cfg"
        config.write_text("N=3\na=2.5\nlambda=1\nn_max=1\nx_max=0\n")
        out = tmp_path / "table.json"
        result = invoke(runner, "table", "--config", str(config), "--out", str(out))
        assert result.exit_code == 0, result.output
        params = json.loads(out.read_text())["params"]
        assert (params["N"], params["lambda"], params["families"]) == (3, 1, [1, 2, 3])


@pytest.mark.parametrize("args", [
    ["table", "--N", "1"],
    ["table", "--a", "0"],
    ["table", "--family", "3", "--lambda", "0"],
    ["table", "--n-max", "65"],
    ["table", "--format", "xml"],
    ["table", "--N", "two"],
    ["table", "--config", "/nonexistent/run.cfg"],
    ["verify", "--workers", "0"],
    ["plot"],
])
def test_usage_errors_exit_64(runner, args):
    result = invoke(runner, *args)
    assert result.exit_code == 64


def test_unwritable_output_exits_1(runner, tmp_path):
    blocker = tmp_path / "file.txt"
    blocker.write_text("")
    result = invoke(runner, "table", "--n-max", "0", "--x-max", "0", "--out", str(blocker / "out.json"))
    assert result.exit_code == 1


def test_version(runner):
    result = invoke(runner, "--version")
    assert result.exit_code == 0
    assert "1.0.0" in result.output


@pytest.mark.parametrize("statuses, code", [
    ((RowStatus.PASS, RowStatus.PASS), 0),
    ((RowStatus.PASS, RowStatus.FAIL), 1),
    ((RowStatus.FAIL, RowStatus.NO_CONVERGE), 2),
])
def test_verify_exit_codes(runner, tmp_path, mocker, statuses, code):
    run_grid = mocker.patch("src.cli.run_grid", return_value=make_rows(*statuses))
    out = tmp_path / "verify.json"
    result = invoke(runner, "verify", "--out", str(out))
    assert result.exit_code == code
    cells, workers = run_grid.call_args.args
    assert [(c.N, c.a, c.lam) for c in cells] == [(2, 1.0, 1)]
    assert workers == 1
    summary = json.loads(out.read_text())["summary"]
    assert summary["exit_code"] == code
    assert summary["cells"] == 1


def test_verify_pins_axes_and_family(runner, tmp_path, mocker):
    run_grid = mocker.patch("src.cli.run_grid", return_value=make_rows(RowStatus.PASS))
    result = invoke(runner, "verify", "--N", "3", "--lambda", "2", "--family", "3", "--workers", "2",
                    "--out", str(tmp_path / "v.json"))
    assert result.exit_code == 0
    cells, workers = run_grid.call_args.args
    assert [(c.N, c.lam, c.families) for c in cells] == [(3, 2, (3,))]
    assert workers == 2


@pytest.mark.slow
@pytest.mark.integration
def test_bench_small(runner, tmp_path):
    out = tmp_path / "bench.json"
    result = invoke(runner, "bench", "--n-max", "1", "--x-max", "1", "--out", str(out))
    assert result.exit_code == 0, result.output
    payload = json.loads(out.read_text())
    assert len(payload["rows"]) == 4
    assert payload["summary"]["all_agree"] is True
    assert payload["summary"]["repeats"] == 1


def test_table_output_is_deterministic(runner):
    args = ["table", "--N", "3", "--a", "0.5", "--lambda", "1", "--n-max", "1", "--x-max", "1"]
    first, second = invoke(runner, *args), invoke(runner, *args)
    assert first.exit_code == second.exit_code == 0
    assert first.output == second.output


@pytest.mark.slow
@pytest.mark.integration
def test_unreachable_tolerance_keeps_rows_and_exits_1(runner, tmp_path):
    out = tmp_path / "verify.json"
    result = invoke(runner, "verify", "--n-max", "1", "--x-max", "1", "--tol", "1e-30", "--out", str(out))
    assert result.exit_code == 1
    payload = json.loads(out.read_text())
    assert payload["summary"]["fail"] > 0
    assert all(row["tolerance"] > 0 for row in payload["rows"])
