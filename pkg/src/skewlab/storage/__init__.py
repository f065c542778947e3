# src/skewlab/storage/__init__.py
from __future__ import annotations

from .models import SCHEMA_VERSION, ArtifactMeta, ExperimentArtifacts, Provenance, Summary
from .backend import (
    dumps_json,
    ensure_output_root,
    experiment_dir,
    load_summary,
    to_jsonable,
    write_experiment,
    write_json,
    write_table,
)

__all__ = [
    "SCHEMA_VERSION",
    "ArtifactMeta",
    "ExperimentArtifacts",
    "Provenance",
    "Summary",
    "dumps_json",
    "ensure_output_root",
    "experiment_dir",
    "load_summary",
    "to_jsonable",
    "write_experiment",
    "write_json",
    "write_table",
]
