# src/skewlab/settings.py
from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

ENV_CONFIG = "SKEWLAB_CONFIG"
CONFIG_NAMES: tuple[str, ...] = ("skewlab.yml", "skewlab.yaml")


class ConfigError(ValueError):
    """A config problem, reported as `path:line:column: message` when the node is known."""


@dataclass(slots=True)
class RuntimeContext:
    config_path: Path | None = None
    fixture: str | None = None
    seed: int | None = None
    output_dir: Path | None = None
    threads: int | None = None


@dataclass(frozen=True, slots=True)
class LoadedConfig:
    """Parsed YAML mapping plus the line/column of every key and value node."""

    source: str
    data: dict[str, Any]
    key_marks: dict[tuple[str, ...], tuple[int, int]] = field(default_factory=dict)
    value_marks: dict[tuple[str, ...], tuple[int, int]] = field(default_factory=dict)

    def where(self, *keys: str, value: bool = True) -> str:
        marks = self.value_marks if value else self.key_marks
        mark = marks.get(tuple(keys)) or self.key_marks.get(tuple(keys))
        if mark is None:
            return self.source
        return f"{self.source}:{mark[0]}:{mark[1]}"


_CTX = RuntimeContext()
_CONFIG_CACHE: dict[str, LoadedConfig] = {}


def set_runtime_context(
    *,
    config_path: str | Path | None = None,
    fixture: str | None = None,
    seed: int | None = None,
    output_dir: str | Path | None = None,
    threads: int | None = None,
) -> None:
    if config_path is not None:
        _CTX.config_path = Path(config_path).expanduser().resolve()
    if fixture is not None:
        _CTX.fixture = fixture.strip() or None
    if seed is not None:
        _CTX.seed = int(seed)
    if output_dir is not None:
        _CTX.output_dir = Path(output_dir).expanduser()
    if threads is not None:
        _CTX.threads = int(threads)


def reset_runtime_context() -> None:
    """Forget overrides and cached configs (used between runs in one process)."""
    global _CTX
    _CTX = RuntimeContext()
    _CONFIG_CACHE.clear()


def get_runtime_context() -> RuntimeContext:
    return _CTX


def _resolve_config_path() -> Path | None:
    if _CTX.config_path is not None:
        return _CTX.config_path

    env = os.environ.get(ENV_CONFIG, "").strip()
    if env:
        p = Path(env).expanduser()
        if p.exists() and p.is_file():
            return p.resolve()

    cwd = Path.cwd()
    for name in CONFIG_NAMES:
        p = cwd / name
        if p.exists() and p.is_file():
            return p.resolve()

    return None


def get_runtime_config_path() -> Path | None:
    return _resolve_config_path()


def _collect_marks(
    node: yaml.Node,
    path: tuple[str, ...],
    key_marks: dict[tuple[str, ...], tuple[int, int]],
    value_marks: dict[tuple[str, ...], tuple[int, int]],
) -> None:
    if not isinstance(node, yaml.MappingNode):
        return
    for key_node, value_node in node.value:
        key = path + (str(key_node.value),)
        key_marks[key] = (key_node.start_mark.line + 1, key_node.start_mark.column + 1)
        value_marks[key] = (value_node.start_mark.line + 1, value_node.start_mark.column + 1)
        _collect_marks(value_node, key, key_marks, value_marks)


def parse_yaml_text(text: str, source: str) -> LoadedConfig:
    """Parse a YAML document into a mapping, keeping node positions for diagnostics."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        where = f"{source}:{mark.line + 1}:{mark.column + 1}" if mark is not None else source
        raise ConfigError(f"{where}: {exc.problem}") from None

    if data is None:
        return LoadedConfig(source=source, data={})
    if not isinstance(data, dict):
        raise ConfigError(f"{source}:1:1: skewlab config must be a mapping (top-level dict)")

    key_marks: dict[tuple[str, ...], tuple[int, int]] = {}
    value_marks: dict[tuple[str, ...], tuple[int, int]] = {}
    _collect_marks(node, (), key_marks, value_marks)
    return LoadedConfig(source=source, data=data, key_marks=key_marks, value_marks=value_marks)


def _load_yaml_file(path: Path) -> LoadedConfig:
    return parse_yaml_text(path.read_text(encoding="utf-8"), str(path))


def load_config() -> LoadedConfig:
    """The active config: a fixture, an explicit/env/cwd file, or nothing."""
    if _CTX.fixture is not None:
        from .fixtures import fixture_text

        key = f"<fixture:{_CTX.fixture}>"
        cached = _CONFIG_CACHE.get(key)
        if cached is None:
            cached = parse_yaml_text(fixture_text(_CTX.fixture), key)
            _CONFIG_CACHE[key] = cached
        return cached

    p = _resolve_config_path()
    if p is None:
        return LoadedConfig(source="<defaults>", data={})
    if not p.exists():
        raise ConfigError(f"{p}: config file not found")

    key = str(p)
    cached = _CONFIG_CACHE.get(key)
    if cached is not None:
        return cached

    loaded = _load_yaml_file(p)
    _CONFIG_CACHE[key] = loaded
    return loaded


def get_section(section_key: str) -> dict[str, Any]:
    sec = load_config().data.get(section_key)
    return dict(sec) if isinstance(sec, dict) else {}
