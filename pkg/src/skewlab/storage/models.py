# src/skewlab/storage/models.py
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

SCHEMA_VERSION = 1


@dataclass(frozen=True, slots=True)
class ArtifactMeta:
    name: str
    kind: str
    path: Path
    size_bytes: int


@dataclass(slots=True)
class ExperimentArtifacts:
    """Everything one subcommand wrote into its output directory."""

    experiment: str
    directory: Path
    files: list[ArtifactMeta] = field(default_factory=list)

    def names(self) -> list[str]:
        return [f.name for f in self.files]


@dataclass(frozen=True, slots=True)
class Summary:
    """
    Outcome of one experiment.

    `checks` maps invariant names to pass/fail; `values` carries fitted
    constants and measured statistics. `passed` is the conjunction of checks.
    """

    experiment: str
    checks: dict[str, bool]
    values: dict[str, Any]
    notes: dict[str, str] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "experiment": self.experiment,
            "checks": dict(self.checks),
            "values": dict(self.values),
            "notes": dict(self.notes),
            "passed": self.passed,
        }


@dataclass(frozen=True, slots=True)
class Provenance:
    experiment: str
    seed: int
    version: str
    config_source: str
    config: dict[str, Any]

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "experiment": self.experiment,
            "seed": self.seed,
            "version": self.version,
            "config_source": self.config_source,
            "config": self.config,
        }
