"""Strict JSON configuration: schema, defaults, and dotted-path access.

All physical values are plain numbers in units of the first transmon
emission rate (rates) and its inverse (times).  Unknown keys fail fast
with the offending key named.  Defaults reproduce the single-unit
operating point of the packaged studies.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field

from .errors import ConfigurationError
from .dynamics.types import TimeGrid
from .model import SOURCE_INITIALS, SourceParams, UnitParams

RETENTIONS = ("all", "sample", "none")
KERNELS = ("paper", "baseline_subtracted")

DEFAULT_UNIT = {
    "gamma01": 1.0,
    "gamma12": 0.1,
    "g": 2.45,
    "delta1": -0.8,
    "delta2": -18.0,
    "E": 0.032,
    "kappa": 0.037,
    "phi": 1.5707963267948966,
}

DEFAULTS = {
    "units": [dict(DEFAULT_UNIT)],
    "source": {"gamma_c": 0.1, "initial": "fock1"},
    "grid": {"t0": 0.0, "T": 80.0, "dt": 0.001},
    "truncation": {"d_cavity": 16, "top_level_tolerance": 1e-5},
    "ensemble": {
        "n_traj": 2000,
        "master_seed": 20260810,
        "parallelism": 0,
        "retention": "sample",
        "sample_per_hypothesis": 50,
    },
    "filter": {
        "kernel": "paper",
        "kernel_estimator_M": 1000,
        "smooth_width": 0.5,
        "hypothesis_test": False,
        "hypothesis_bin": 20,
    },
    "outputs": {"directory": "qtraj_out"},
}

_NUMERIC = (int, float)


def _require_mapping(obj, path):
    if not isinstance(obj, dict):
        raise ConfigurationError(f"config section {path!r} must be an object")


def _merge_section(user: dict, defaults: dict, path: str) -> dict:
    _require_mapping(user, path)
    out = copy.deepcopy(defaults)
    for key, val in user.items():
        if key not in defaults:
            raise ConfigurationError(f"unknown config key {path + '.' + key!r}")
        dv = defaults[key]
        if isinstance(dv, dict):
            out[key] = _merge_section(val, dv, f"{path}.{key}")
        elif isinstance(dv, bool):
            if not isinstance(val, bool):
                raise ConfigurationError(f"{path}.{key} must be a boolean")
            out[key] = val
        elif isinstance(dv, int) and not isinstance(dv, bool):
            if not isinstance(val, int) or isinstance(val, bool):
                raise ConfigurationError(f"{path}.{key} must be an integer")
            out[key] = val
        elif isinstance(dv, float):
            if not isinstance(val, _NUMERIC) or isinstance(val, bool):
                raise ConfigurationError(f"{path}.{key} must be a number")
            out[key] = float(val)
        elif isinstance(dv, str):
            if not isinstance(val, str):
                raise ConfigurationError(f"{path}.{key} must be a string")
            out[key] = val
        else:
            out[key] = val
    return out


def normalize_config(user: dict) -> dict:
    """Validate a raw config dict against the schema and fill defaults."""
    _require_mapping(user, "<top>")
    out = copy.deepcopy(DEFAULTS)
    for key, val in user.items():
        if key == "units":
            if not isinstance(val, list) or not (1 <= len(val) <= 2):
                raise ConfigurationError("config key 'units' must be a list of 1 or 2 objects")
            out["units"] = [
                _merge_section(u, DEFAULT_UNIT, f"units.{i}") for i, u in enumerate(val)
            ]
        elif key in DEFAULTS:
            out[key] = _merge_section(val, DEFAULTS[key], key)
        else:
            raise ConfigurationError(f"unknown config key {key!r}")
    if out["source"]["initial"] not in SOURCE_INITIALS:
        raise ConfigurationError(
            f"source.initial must be one of {SOURCE_INITIALS}, got {out['source']['initial']!r}"
        )
    if out["ensemble"]["retention"] not in RETENTIONS:
        raise ConfigurationError(f"ensemble.retention must be one of {RETENTIONS}")
    if out["filter"]["kernel"] not in KERNELS:
        raise ConfigurationError(f"filter.kernel must be one of {KERNELS}")
    if out["ensemble"]["n_traj"] < 1:
        raise ConfigurationError("ensemble.n_traj must be >= 1")
    if not (0 <= out["ensemble"]["master_seed"] < 2 ** 64):
        raise ConfigurationError("ensemble.master_seed must be a 64-bit unsigned integer")
    if out["truncation"]["d_cavity"] < 2:
        raise ConfigurationError("truncation.d_cavity must be >= 2")
    return out


def load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid JSON: {exc}") from exc
    return normalize_config(raw)


@dataclass
class EnsembleConfig:
    """Validated run configuration (see normalize_config for the schema)."""

    units: tuple[UnitParams, ...]
    source: SourceParams
    grid: TimeGrid
    d_cavity: int = 16
    top_level_tolerance: float = 1e-5
    n_traj: int = 2000
    master_seed: int = 20260810
    parallelism: int = 0
    retention: str = "sample"
    sample_per_hypothesis: int = 50
    kernel_variant: str = "paper"
    kernel_estimator_M: int = 1000
    kernel_smooth_width: float = 0.5
    hypothesis_test: bool = False
    hypothesis_bin: int = 20
    out_dir: str = "qtraj_out"
    raw: dict = field(default_factory=dict, repr=False)


def config_from_dict(d: dict) -> EnsembleConfig:
    d = normalize_config(d)
    units = tuple(UnitParams(**u) for u in d["units"])
    source = SourceParams(**d["source"])
    grid = TimeGrid(**d["grid"])
    if grid.dt > 2e-3 + 1e-15:
        import warnings

        warnings.warn(
            f"grid.dt={grid.dt} exceeds the default cap 2e-3; integration bias grows with dt",
            stacklevel=2,
        )
    return EnsembleConfig(
        units=units,
        source=source,
        grid=grid,
        d_cavity=d["truncation"]["d_cavity"],
        top_level_tolerance=d["truncation"]["top_level_tolerance"],
        n_traj=d["ensemble"]["n_traj"],
        master_seed=d["ensemble"]["master_seed"],
        parallelism=d["ensemble"]["parallelism"],
        retention=d["ensemble"]["retention"],
        sample_per_hypothesis=d["ensemble"]["sample_per_hypothesis"],
        kernel_variant=d["filter"]["kernel"],
        kernel_estimator_M=d["filter"]["kernel_estimator_M"],
        kernel_smooth_width=d["filter"]["smooth_width"],
        hypothesis_test=d["filter"]["hypothesis_test"],
        hypothesis_bin=d["filter"]["hypothesis_bin"],
        out_dir=d["outputs"]["directory"],
        raw=d,
    )


def config_to_dict(cfg: EnsembleConfig) -> dict:
    """Canonical dict echo (defaults filled) of a validated config."""
    return copy.deepcopy(cfg.raw) if cfg.raw else normalize_config({})


def sweepable_paths(d: dict) -> list[str]:
    """All dotted paths addressing one scalar field of the config."""
    out = []

    def walk(node, prefix):
        if isinstance(node, dict):
            for k, v in node.items():
                walk(v, f"{prefix}.{k}" if prefix else k)
        elif isinstance(node, list):
            for i, v in enumerate(node):
                walk(v, f"{prefix}.{i}")
        else:
            out.append(prefix)

    walk(d, "")
    return out


def set_config_value(d: dict, dotted: str, value) -> dict:
    """Return a copy of the config dict with one scalar field replaced.

    ``units.<field>`` (no index) addresses the field in every unit.
    """
    d = copy.deepcopy(d)
    parts = dotted.split(".")
    if parts[0] == "units" and len(parts) == 2 and not parts[1].isdigit():
        fld = parts[1]
        if fld not in DEFAULT_UNIT:
            raise ConfigurationError(
                f"unknown sweep parameter {dotted!r}; valid paths:\n  "
                + "\n  ".join(sweepable_paths(d))
            )
        for u in d["units"]:
            u[fld] = value
        return d
    node = d
    try:
        for p in parts[:-1]:
            node = node[int(p)] if isinstance(node, list) else node[p]
        leaf = parts[-1]
        if isinstance(node, list):
            node[int(leaf)] = value
        else:
            if leaf not in node or isinstance(node[leaf], (dict, list)):
                raise KeyError(leaf)
            node[leaf] = value
    except (KeyError, IndexError, ValueError, TypeError) as exc:
        raise ConfigurationError(
            f"unknown sweep parameter {dotted!r}; valid paths:\n  "
            + "\n  ".join(sweepable_paths(d))
        ) from exc
    return d


def default_config_dict() -> dict:
    return normalize_config({})


assert abs(DEFAULT_UNIT["phi"] - math.pi / 2) < 1e-15
