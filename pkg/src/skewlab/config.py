# src/skewlab/config.py
from __future__ import annotations

import logging
from collections.abc import Mapping
from pathlib import Path
from typing import Any

from . import settings
from .settings import ConfigError, LoadedConfig

logger = logging.getLogger(__name__)

ESTIMATOR_CHOICES: tuple[str, ...] = ("birkhoff", "cesaro")

# Defaults
_DEFAULTS: dict[str, Any] = {
    "system-settings": {
        "matrix": [[2, 1], [1, 1]],
        "kappa": 0.5,
        "delta": 0.05,
        "alpha": 0.0,
        "holonomy_depth": 40,
        "max_backward": 200,
        "max_iterate": 10_000,
    },
    "partition-settings": {
        "builtin": True,
        "refine": 1,
        "rectangles": None,
        "cylinder_cap": 16,
        "boundary_tol": 1e-9,
        "verify_samples": 100_000,
    },
    "tolerance-settings": {
        "inverse_tol": 1e-13,
        "holonomy_tol": 1e-8,
        "markov_tol": 1e-7,
    },
    "sampling-settings": {
        "source": [0.3141, 0.2718, 0.25],
        "n_particles": 100_000,
        "n_iterates": 100,
        "burn_in": 50,
        "estimator": "birkhoff",
        "chunks": 8,
        "n_boot": 200,
    },
    "hitting-settings": {
        "section": [0.5, 0.5],
        "observable": "cos_theta",
        "exact_n": [4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14],
        "mc_n": [16, 18, 20, 22, 25],
        "n_samples": 100_000,
        "limit": None,
    },
    "transverse-settings": {
        "sections": [[0.5, 0.5], [0.2, 0.8]],
        "observable": "cos_theta",
        "budget": 2.0,
        "n_bins": 4,
        "fault": 1.5,
    },
    "coupling-settings": {
        "second": [0.7071, 0.1618, 0.6],
        "n_pairs": 10_000,
        "horizon": 200,
        "anchor_budget": 12,
        "max_pairs": 8,
        "depth_cap": 6,
        "u_depth": 8,
        "profile_plaques": 10,
        "q1": 0.5,
        "epsilon": None,
        "shadow_length": 20,
        "cylinder_points": 33,
    },
    "ldp-settings": {
        "observable": "cos_theta",
        "alpha": 0.2,
        "n_values": [10, 20, 40, 80],
        "n_samples": 1_000_000,
        "stride": 2,
        "iid_control": True,
        "reference_tail": True,
        "cumulant_n_max": 12,
    },
    "correlation-settings": {
        "pairs": [["cos_x1", "cos_x1"], ["cos_theta", "cos_theta"]],
        "n_values": [0, 1, 2, 3, 4, 5, 6, 8, 10],
        "n_samples": 100_000,
    },
    "atom-settings": {
        "anchor": [0.5, 0.5],
        "slab": 0.02,
        "eps": 0.01,
        "min_particles": 50,
    },
    "run-settings": {
        "seed": 0,
        "output_dir": "skewlab-out",
        "threads": 1,
    },
}

# keys whose default is None or whose value is structured
_SHAPES: dict[tuple[str, str], str] = {
    ("system-settings", "matrix"): "int-matrix",
    ("partition-settings", "rectangles"): "rectangles",
    ("sampling-settings", "source"): "point3",
    ("hitting-settings", "section"): "point2",
    ("hitting-settings", "exact_n"): "int-list",
    ("hitting-settings", "mc_n"): "int-list",
    ("hitting-settings", "limit"): "float-or-null",
    ("transverse-settings", "sections"): "point2-pair",
    ("coupling-settings", "second"): "point3",
    ("coupling-settings", "epsilon"): "float-or-null",
    ("ldp-settings", "n_values"): "int-list",
    ("correlation-settings", "pairs"): "name-pairs",
    ("correlation-settings", "n_values"): "int-list",
    ("atom-settings", "anchor"): "point2",
}

_CHOICES: dict[tuple[str, str], tuple[str, ...]] = {
    ("sampling-settings", "estimator"): ESTIMATOR_CHOICES,
}


def section_names() -> list[str]:
    return list(_DEFAULTS)


def _is_number(x: Any) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _is_int(x: Any) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _point(x: Any, n: int) -> bool:
    return isinstance(x, list) and len(x) == n and all(_is_number(v) for v in x)


def _check_shape(shape: str, value: Any) -> str | None:
    """None when the value fits, else a description of what was expected."""
    if shape == "int-matrix":
        ok = isinstance(value, list) and len(value) == 2 and all(
            isinstance(r, list) and len(r) == 2 and all(_is_int(v) for v in r) for r in value
        )
        return None if ok else "expected a 2x2 integer matrix"
    if shape == "rectangles":
        ok = value is None or (isinstance(value, list) and value and all(_point(r, 4) for r in value))
        return None if ok else "expected a list of [anchor_x1, anchor_x2, lu, ls] rows"
    if shape == "point2":
        return None if _point(value, 2) else "expected [x1, x2]"
    if shape == "point3":
        return None if _point(value, 3) else "expected [x1, x2, theta]"
    if shape == "point2-pair":
        ok = isinstance(value, list) and len(value) == 2 and all(_point(p, 2) for p in value)
        return None if ok else "expected two [x1, x2] anchors"
    if shape == "int-list":
        ok = isinstance(value, list) and value and all(_is_int(v) and v >= 0 for v in value)
        return None if ok else "expected a non-empty list of non-negative integers"
    if shape == "float-or-null":
        return None if value is None or _is_number(value) else "expected a number or null"
    if shape == "name-pairs":
        ok = isinstance(value, list) and value and all(
            isinstance(p, list) and len(p) == 2 and all(isinstance(s, str) for s in p) for p in value
        )
        return None if ok else "expected a list of [observable, observable] pairs"
    raise AssertionError(f"unknown shape {shape}")


def _check_scalar(default: Any, value: Any) -> str | None:
    if isinstance(default, bool):
        return None if isinstance(value, bool) else "expected true or false"
    if isinstance(default, int):
        return None if _is_int(value) else "expected an integer"
    if isinstance(default, float):
        return None if _is_number(value) else "expected a number"
    if isinstance(default, str):
        return None if isinstance(value, str) else "expected a string"
    return None


def validate_config(cfg: LoadedConfig) -> None:
    """Unknown sections/keys and wrongly typed values are hard errors."""
    for section, body in cfg.data.items():
        if section not in _DEFAULTS:
            raise ConfigError(f"{cfg.where(section, value=False)}: unknown section {section!r}")
        if body is None:
            continue
        if not isinstance(body, Mapping):
            raise ConfigError(f"{cfg.where(section)}: section {section!r} must be a mapping")
        defaults = _DEFAULTS[section]
        for key, value in body.items():
            if key not in defaults:
                raise ConfigError(f"{cfg.where(section, str(key), value=False)}: unknown key {key!r} in {section}")
            shape = _SHAPES.get((section, key))
            problem = _check_shape(shape, value) if shape else _check_scalar(defaults[key], value)
            if problem is None and (section, key) in _CHOICES and value not in _CHOICES[(section, key)]:
                problem = f"expected one of {list(_CHOICES[(section, key)])}"
            if problem is not None:
                raise ConfigError(f"{cfg.where(section, str(key))}: {section}.{key}: {problem}, got {value!r}")


def load_validated() -> LoadedConfig:
    cfg = settings.load_config()
    validate_config(cfg)
    return cfg


def _deep_merge_dicts(base: dict[str, Any], overlay: dict[str, Any]) -> dict[str, Any]:
    out = dict(base)
    for k, v in overlay.items():
        cur = out.get(k)
        if isinstance(cur, Mapping) and isinstance(v, Mapping):
            out[k] = _deep_merge_dicts(dict(cur), dict(v))
        else:
            out[k] = v
    return out


def _merged_section(section: str) -> dict[str, Any]:
    load_validated()
    base = dict(_DEFAULTS.get(section, {}) or {})
    return _deep_merge_dicts(base, settings.get_section(section))


def get_section(section: str) -> dict[str, Any]:
    if section not in _DEFAULTS:
        raise KeyError(section)
    return _merged_section(section)


def resolved_config() -> dict[str, dict[str, Any]]:
    """Every section with defaults filled in, as echoed into provenance records."""
    return {name: _merged_section(name) for name in _DEFAULTS}


# ---- Run settings ---------------------------------------------------------------


def get_seed() -> int:
    ctx = settings.get_runtime_context()
    if ctx.seed is not None:
        return ctx.seed
    seed = int(_merged_section("run-settings")["seed"])
    if not (0 <= seed < 2**64):
        raise ConfigError("run-settings.seed must be an unsigned 64-bit integer")
    return seed


def get_output_dir() -> Path:
    ctx = settings.get_runtime_context()
    if ctx.output_dir is not None:
        return ctx.output_dir
    raw = str(_merged_section("run-settings")["output_dir"]).strip() or "skewlab-out"
    p = Path(raw).expanduser()
    if p.is_absolute():
        return p
    base_path = settings.get_runtime_config_path()
    base = base_path.parent if base_path is not None else Path.cwd()
    return base / p


def get_threads() -> int:
    ctx = settings.get_runtime_context()
    n = ctx.threads if ctx.threads is not None else int(_merged_section("run-settings")["threads"])
    if n < 1:
        raise ConfigError("threads must be >= 1")
    return n


def get_chunks() -> int:
    n = int(_merged_section("sampling-settings")["chunks"])
    if n < 1:
        raise ConfigError("sampling-settings.chunks must be >= 1")
    return n


# ---- Builders -------------------------------------------------------------------


def build_system() -> Any:
    from .system import make_system

    sec = _merged_section("system-settings")
    tol = _merged_section("tolerance-settings")
    return make_system(
        sec["matrix"],
        kappa=float(sec["kappa"]),
        delta=float(sec["delta"]),
        alpha=float(sec["alpha"]),
        holonomy_depth=int(sec["holonomy_depth"]),
        max_backward=int(sec["max_backward"]),
        max_iterate=int(sec["max_iterate"]),
        inverse_tol=float(tol["inverse_tol"]),
        holonomy_tol=float(tol["holonomy_tol"]),
    )


def build_partition(auto: Any) -> Any:
    from .partition import builtin_cat_partition, partition_from_rectangles

    sec = _merged_section("partition-settings")
    rects = sec.get("rectangles")
    if rects:
        return partition_from_rectangles(
            auto,
            rects,
            boundary_tol=float(sec["boundary_tol"]),
            cylinder_cap=int(sec["cylinder_cap"]),
        )
    if not sec["builtin"]:
        raise ConfigError("partition-settings: builtin is false but no rectangles are given")
    return builtin_cat_partition(
        auto,
        refine=int(sec["refine"]),
        boundary_tol=float(sec["boundary_tol"]),
        cylinder_cap=int(sec["cylinder_cap"]),
    )
