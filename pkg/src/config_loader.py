"""Configuration layers for the command line.

Priority, lowest first: src/config.json (or CHARLIER_CONFIG_PATH), an
optional key=value file given with --config, command-line flags.
"""
import json
import logging
import os
from typing import Literal, Optional

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from src.constants import GRID_CAP
from src.exceptions import UsageError

DEFAULT_CONFIG_PATH = os.path.join("src", "config.json")
CONFIG_ENV_VAR = "CHARLIER_CONFIG_PATH"
COMMANDS = ("table", "verify", "bench")


class RunConfig(BaseModel):
    """Validated settings of one command.

    N, a and lam stay None when a command runs over the configured grid.
    """
    model_config = ConfigDict(populate_by_name=True, extra="forbid")

    N: Optional[int] = Field(default=None, ge=2)
    a: Optional[float] = Field(default=None, gt=0)
    lam: Optional[int] = Field(default=None, ge=0, alias="lambda")
    n_max: int = Field(default=10, ge=0, le=GRID_CAP)
    x_max: int = Field(default=10, ge=0, le=GRID_CAP)
    family: Optional[Literal[1, 2, 3]] = None
    tol: float = Field(default=1e-8, gt=0)
    trunc_eps: float = Field(default=1e-14, gt=0)
    format: Literal["json", "csv"] = "json"
    out: Optional[str] = None
    workers: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode="after")
    def family_three_needs_lambda(self):
        if self.family == 3 and self.lam is not None and self.lam < 1:
            raise ValueError("dual family 3 needs lambda >= 1")
        return self


def load_app_config(config_path=None):
    """Reads the JSON configuration.

    Path priority: config_path argument, then CHARLIER_CONFIG_PATH, then src/config.json.

    Raises:
        RuntimeError: When the file is missing or not valid JSON.
    """
    config_path = config_path or os.environ.get(CONFIG_ENV_VAR) or DEFAULT_CONFIG_PATH
    try:
        with open(config_path, 'r') as f:
            config = json.load(f)
    except (FileNotFoundError, json.JSONDecodeError) as e:
        raise RuntimeError(f"Could not load or parse '{config_path}': {e}")
    logging.debug(f"Loaded configuration from {config_path}")
    return config


def normalize_key(key):
    """'--n-max', 'n-max' and 'N_MAX' all give 'n_max'; 'N' stays 'N'; 'lambda' gives 'lam'."""
    key = key.strip().lstrip("-").replace("-", "_")
    if key in ("N", "n"):
        return "N"
    key = key.lower()
    return "lam" if key in ("lambda", "lam") else key


def normalize(values):
    return {normalize_key(k): v for k, v in values.items()}


def load_key_value_file(path):
    """Settings from a plain key=value file.

    Raises:
        UsageError: When the file is missing, a key has no value or a key is unknown.
    """
    if not os.path.isfile(path):
        raise UsageError(f"Config file '{path}' does not exist")
    values = normalize(dotenv_values(path))
    known = set(RunConfig.model_fields)
    for key, value in values.items():
        if key not in known:
            raise UsageError(f"Unknown key '{key}' in config file '{path}'")
        if value is None:
            raise UsageError(f"Key '{key}' in config file '{path}' has no value")
    logging.info(f"Read {len(values)} settings from {path}")
    return values


def command_defaults(app_config, command):
    """run_defaults overlaid with the command's own defaults."""
    if command not in COMMANDS:
        raise UsageError(f"Unknown command '{command}'")
    defaults = normalize(app_config.get("run_defaults", {}))
    if command == "table":
        defaults.update(normalize(app_config.get("table_defaults", {})))
    elif command == "verify":
        grid = app_config.get("verify_grid", {})
        defaults.update({k: grid[k] for k in ("n_max", "x_max") if k in grid})
    else:
        bench = normalize(app_config.get("bench", {}))
        defaults.update({k: v for k, v in bench.items() if k in RunConfig.model_fields})
    return defaults


def resolve_run_config(app_config, command, config_file=None, overrides=None):
    """Layers defaults, the key=value file and flags into a RunConfig.

    Args:
        app_config (dict): Parsed JSON configuration.
        command (str): 'table', 'verify' or 'bench'.
        config_file (str): Optional key=value file.
        overrides (dict): Flag values; None entries are ignored.

    Returns:
        RunConfig: The validated settings.

    Raises:
        UsageError: On any invalid or conflicting value.
    """
    merged = command_defaults(app_config, command)
    if config_file:
        merged.update(load_key_value_file(config_file))
    merged.update({k: v for k, v in normalize(overrides or {}).items() if v is not None})
    if merged.get("out") in ("", "-"):
        merged["out"] = None
    try:
        cfg = RunConfig.model_validate(merged)
    except ValidationError as e:
        problems = "; ".join(f"{'.'.join(str(part) for part in err['loc']) or 'config'}: {err['msg']}"
                             for err in e.errors())
        raise UsageError(f"Invalid configuration: {problems}")
    logging.debug(f"Resolved {command} configuration: {cfg.model_dump()}")
    return cfg


def grid_axes(app_config, cfg: RunConfig):
    """(Ns, As, lams) for verify: a set value pins its axis, else the configured grid."""
    grid = app_config.get("verify_grid", {})
    Ns = [cfg.N] if cfg.N is not None else list(grid.get("N", [2, 3]))
    As = [cfg.a] if cfg.a is not None else list(grid.get("a", [0.5, 1.0, 2.5]))
    lams = [cfg.lam] if cfg.lam is not None else list(grid.get("lambda", [0, 1, 3]))
    if cfg.family == 3 and not any(lam >= 1 for lam in lams):
        raise UsageError("dual family 3 needs lambda >= 1")
    return Ns, As, lams


def truncation_caps(app_config):
    caps = app_config.get("truncation", {})
    return caps.get("max_terms"), caps.get("dual_max_terms")
