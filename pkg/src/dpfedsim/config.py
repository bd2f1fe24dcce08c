"""Sectioned key-value experiment configs with fail-fast validation.

Sections are [federation], [schedule], [dp], [data], [output] and, for sweep
files, [sweep]. Every key has a default, so an empty file describes a valid
noise-free run on the default synthetic task. Unknown sections or keys are
errors: a typo should never silently fall back to a default.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from typing import Any

from .regression import ConfigError

__all__ = ["RawConfig", "parse_config", "DEFAULTS", "E_RULES"]

# symbolic local-iteration rules accepted on the sweep E_rule axis,
# mapped to the exponent a in E = round(T^a)
E_RULES = {
    "1": 0.0,
    "T^{1/3}": 1.0 / 3.0,
    "T^{1/2}": 0.5,
    "T^{2/3}": 2.0 / 3.0,
    "T": 1.0,
}

# every key, its default and its parser; "derived" defaults are resolved later
DEFAULTS: dict[str, dict[str, tuple[Any, type]]] = {
    "federation": {
        "clients": (100, int),
        "pool_size": (10, int),
        "local_iters": (5, int),
        "global_iters": (100, int),
        "clip_threshold": (150.0, float),
        "clip_norm": ("l1", str),
        "seed": (0, int),
        "repeats": (20, int),
        "workers": (1, int),
    },
    "schedule": {
        "kind": ("decay", str),  # decay | constant
        "eta": (0.01, float),  # constant schedule only
    },
    "dp": {
        "mechanism": ("none", str),  # none | laplace | gaussian
        "epsilon": (math.inf, float),
        "delta": (0.0001, float),
        "c2": (1.0, float),
        "xi1": (None, float),  # defaults to clip_threshold
        "xi2": (None, float),  # defaults to clip_threshold
    },
    "data": {
        "kind": ("synth", str),  # synth | csv
        "n_per_client": (20, int),
        "features": (5, int),
        "heterogeneity": (0.5, float),
        "noise_std": (0.1, float),
        "seed": (0, int),
        "add_bias": (True, bool),
        "path": ("", str),  # csv only
        "target_column": ("", str),
        "feature_columns": ("", str),  # comma separated, empty = all others
        "train_fraction": (0.8, float),
        "sort_key": ("", str),  # csv only, empty = the target column
    },
    "output": {
        "rounds_csv": ("rounds.csv", str),
        "sweep_csv": ("sweep.csv", str),
    },
    "sweep": {
        "axis": ("", str),  # T | E | epsilon | E_rule
        "values": ("", str),
    },
}


@dataclass
class RawConfig:
    """Parsed, defaulted and type-checked key-value content of a config file."""

    federation: dict = field(default_factory=dict)
    schedule: dict = field(default_factory=dict)
    dp: dict = field(default_factory=dict)
    data: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)

    def section(self, name: str) -> dict:
        return getattr(self, name)


def _convert(section: str, key: str, raw: str):
    default, kind = DEFAULTS[section][key]
    raw = raw.strip()
    try:
        if kind is bool:
            if raw.lower() in ("true", "yes", "1", "on"):
                return True
            if raw.lower() in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if kind is float:
            if raw.lower() in ("inf", "infinity"):
                return math.inf
            return float(raw)
        if kind is int:
            return int(raw)
        return raw
    except ValueError:
        raise ConfigError(
            f"[{section}] {key}: cannot parse {raw!r} as {kind.__name__}"
        ) from None


def parse_config(path) -> RawConfig:
    """Read a config file, applying defaults and rejecting unknown keys."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        read = parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not read:
        raise OSError(f"config file not found: {path}")

    for section in parser.sections():
        if section not in DEFAULTS:
            raise ConfigError(
                f"{path}: unknown section [{section}], expected one of "
                f"{sorted(DEFAULTS)}"
            )

    cfg = RawConfig()
    for section, keys in DEFAULTS.items():
        target = cfg.section(section)
        for key, (default, _) in keys.items():
            target[key] = default
        if parser.has_section(section):
            for key, raw in parser.items(section):
                if key not in keys:
                    raise ConfigError(
                        f"{path}: unknown key {key!r} in [{section}], expected one of "
                        f"{sorted(keys)}"
                    )
                target[key] = _convert(section, key, raw)

    _cross_validate(cfg, path)
    return cfg


def _cross_validate(cfg: RawConfig, path) -> None:
    fed = cfg.federation
    if fed["clip_norm"] not in ("l1", "l2"):
        raise ConfigError(f"{path}: clip_norm must be l1 or l2")
    if cfg.schedule["kind"] not in ("decay", "constant"):
        raise ConfigError(f"{path}: schedule kind must be decay or constant")
    if cfg.dp["mechanism"] not in ("none", "laplace", "gaussian"):
        raise ConfigError(f"{path}: mechanism must be none, laplace or gaussian")
    if cfg.data["kind"] not in ("synth", "csv"):
        raise ConfigError(f"{path}: data kind must be synth or csv")
    if cfg.data["kind"] == "csv":
        if not cfg.data["path"]:
            raise ConfigError(f"{path}: data kind csv requires a path")
        if not cfg.data["target_column"]:
            raise ConfigError(f"{path}: data kind csv requires a target_column")
    # sensitivities default to the clip threshold
    if cfg.dp["xi1"] is None:
        cfg.dp["xi1"] = fed["clip_threshold"]
    if cfg.dp["xi2"] is None:
        cfg.dp["xi2"] = fed["clip_threshold"]
    if cfg.sweep["axis"]:
        if cfg.sweep["axis"] not in ("T", "E", "epsilon", "E_rule"):
            raise ConfigError(f"{path}: sweep axis must be T, E, epsilon or E_rule")
        if not cfg.sweep["values"]:
            raise ConfigError(f"{path}: sweep needs a non-empty values list")


def parse_sweep_values(axis: str, values: str) -> list:
    """Turn the sweep values string into typed grid points."""
    tokens = [v.strip() for v in values.split(",") if v.strip()]
    if not tokens:
        raise ConfigError("sweep values list is empty")
    if axis in ("T", "E"):
        try:
            return [int(v) for v in tokens]
        except ValueError:
            raise ConfigError(f"sweep axis {axis} takes integer values, got {tokens}") from None
    if axis == "epsilon":
        out = []
        for v in tokens:
            out.append(math.inf if v.lower() in ("inf", "infinity") else float(v))
        return out
    if axis == "E_rule":
        for v in tokens:
            if v not in E_RULES:
                raise ConfigError(
                    f"unknown E rule {v!r}, expected one of {sorted(E_RULES)}"
                )
        return tokens
    raise ConfigError(f"unknown sweep axis {axis!r}")
