import json

import pytest

from src.config_loader import (RunConfig, command_defaults, grid_axes, load_app_config, load_key_value_file,
                               normalize_key, resolve_run_config, truncation_caps)
from src.exceptions import UsageError

APP_CONFIG = {
    "run_defaults": {"n_max": 10, "x_max": 10, "tol": 1e-8, "trunc_eps": 1e-14, "format": "json", "workers": 1},
    "table_defaults": {"N": 2, "a": 1.0, "lambda": 0, "n_max": 4, "x_max": 4},
    "verify_grid": {"N": [2, 3], "a": [0.5, 1.0, 2.5], "lambda": [0, 1, 3], "n_max": 6, "x_max": 7},
    "truncation": {"max_terms": 400, "dual_max_terms": 300},
    "bench": {"N": 2, "a": 1.0, "lambda": 1, "n_max": 5, "x_max": 5, "repeats": 3},
}


@pytest.fixture
def kv_file(tmp_path):
    def write(text):
        path = tmp_path / "run.cfg"
        path.write_text(text)
        return str(path)
    return write


class TestLoadAppConfig:
    def test_reads_explicit_path(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps(APP_CONFIG))
        assert load_app_config(str(path)) == APP_CONFIG

    def test_env_variable_points_at_test_config(self):
        config = load_app_config()
        assert config["verify_grid"]["N"] == [2]

    def test_shipped_config_leaves_workers_to_the_cpu_count(self):
        config = load_app_config("src/config.json")
        assert config["run_defaults"]["workers"] is None
        assert resolve_run_config(config, "verify").workers is None
        assert RunConfig().workers is None

    def test_missing_or_broken_file(self, tmp_path):
        with pytest.raises(RuntimeError, match="Could not load or parse"):
            load_app_config(str(tmp_path / "absent.json"))
        broken = tmp_path / "broken.json"
        broken.write_text("{not json")
        with pytest.raises(RuntimeError, match="Could not load or parse"):
            load_app_config(str(broken))


@pytest.mark.parametrize("raw, expected", [
    ("N", "N"), ("n", "N"), ("--n-max", "n_max"), ("X_MAX", "x_max"), ("lambda", "lam"),
    ("trunc-eps", "trunc_eps"), (" tol ", "tol"),
])
def test_normalize_key(raw, expected):
    assert normalize_key(raw) == expected


def test_key_value_file(kv_file):
    values = load_key_value_file(kv_file("N=3\nlambda=2\nn-max=5\n# comment\nformat=csv\n"))
    assert values == {"N": "3", "lam": "2", "n_max": "5", "format": "csv"}


def test_key_value_file_errors(kv_file, tmp_path):
    with pytest.raises(UsageError, match="does not exist"):
        load_key_value_file(str(tmp_path / "missing.cfg"))
    with pytest.raises(UsageError, match="Unknown key 'colour'"):
        load_key_value_file(kv_file("colour=red\n"))
    with pytest.raises(UsageError, match="has no value"):
        load_key_value_file(kv_file("tol\n"))


def test_command_defaults_per_command():
    table = command_defaults(APP_CONFIG, "table")
    assert table["n_max"] == 4 and table["N"] == 2 and table["lam"] == 0
    verify = command_defaults(APP_CONFIG, "verify")
    assert verify["n_max"] == 6 and verify["x_max"] == 7 and "N" not in verify
    bench = command_defaults(APP_CONFIG, "bench")
    assert bench["lam"] == 1 and "repeats" not in bench
    with pytest.raises(UsageError, match="Unknown command"):
        command_defaults(APP_CONFIG, "plot")


def test_flags_override_file_which_overrides_defaults(kv_file):
    path = kv_file("n_max=7\ntol=1e-6\nformat=csv\n")
    cfg = resolve_run_config(APP_CONFIG, "table", path, {"n_max": 3, "tol": None, "out": "-"})
    assert cfg.n_max == 3
    assert cfg.tol == pytest.approx(1e-6)
    assert cfg.format == "csv"
    assert cfg.out is None
    assert cfg.lam == 0


@pytest.mark.parametrize("overrides, message", [
    ({"N": 1}, "N"),
    ({"a": -2.0}, "a"),
    ({"lambda": -1}, "lam"),
    ({"n_max": 65}, "n_max"),
    ({"tol": 0.0}, "tol"),
    ({"format": "xml"}, "format"),
    ({"family": 4}, "family"),
    ({"family": 3, "lambda": 0}, "lambda >= 1"),
])
def test_invalid_values_are_usage_errors(overrides, message):
    with pytest.raises(UsageError, match=f"Invalid configuration.*{message}"):
        resolve_run_config(APP_CONFIG, "table", None, overrides)


def test_run_config_accepts_field_names_and_aliases():
    assert RunConfig(lam=2).lam == 2
    assert RunConfig.model_validate({"lambda": 2}).lam == 2


def test_grid_axes_pins_given_values():
    cfg = resolve_run_config(APP_CONFIG, "verify", None, {"N": 3})
    assert grid_axes(APP_CONFIG, cfg) == ([3], [0.5, 1.0, 2.5], [0, 1, 3])
    cfg = resolve_run_config(APP_CONFIG, "verify", None, {"a": 2.0, "lambda": 1})
    assert grid_axes(APP_CONFIG, cfg) == ([2, 3], [2.0], [1])


def test_grid_axes_family_three_needs_positive_lambda():
    config = dict(APP_CONFIG, verify_grid=dict(APP_CONFIG["verify_grid"], **{"lambda": [0]}))
    cfg = resolve_run_config(config, "verify", None, {"family": 3})
    with pytest.raises(UsageError, match="lambda >= 1"):
        grid_axes(config, cfg)


def test_truncation_caps():
    assert truncation_caps(APP_CONFIG) == (400, 300)
    assert truncation_caps({}) == (None, None)
