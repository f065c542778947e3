# src/skewlab/storage/backend.py
from __future__ import annotations

import json
import math
import os
import re
import tempfile
from collections.abc import Mapping
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from .models import ArtifactMeta, ExperimentArtifacts, Provenance, Summary

_SAFE_NAME = re.compile(r"[^A-Za-z0-9._-]+")


def ensure_output_root(root_dir: Path) -> Path:
    root = Path(root_dir).expanduser().resolve()
    root.mkdir(parents=True, exist_ok=True)
    return root


def experiment_dir(root_dir: Path, experiment: str) -> Path:
    name = _SAFE_NAME.sub("_", experiment).strip("._") or "experiment"
    d = ensure_output_root(root_dir) / name
    d.mkdir(parents=True, exist_ok=True)
    return d


def to_jsonable(obj: Any) -> Any:
    """
    Plain JSON values: numpy scalars and arrays unwrap, paths become strings,
    non-finite floats become null.
    """
    if isinstance(obj, Mapping):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, Path):
        return str(obj)
    return obj


def dumps_json(obj: Any) -> bytes:
    text = json.dumps(to_jsonable(obj), ensure_ascii=False, indent=2, sort_keys=True, allow_nan=False)
    return (text + "\n").encode("utf-8")


def write_table(directory: Path, name: str, df: pd.DataFrame) -> ArtifactMeta:
    path = Path(directory) / f"{name}.csv"
    data = df.to_csv(index=False, float_format="%.17g", lineterminator="\n").encode("utf-8")
    _write_bytes_atomic(path, data)
    return ArtifactMeta(name=path.name, kind="csv", path=path, size_bytes=len(data))


def write_json(directory: Path, name: str, obj: Any) -> ArtifactMeta:
    path = Path(directory) / f"{name}.json"
    data = dumps_json(obj)
    _write_bytes_atomic(path, data)
    return ArtifactMeta(name=path.name, kind="json", path=path, size_bytes=len(data))


def write_experiment(
    *,
    root_dir: Path,
    summary: Summary,
    provenance: Provenance,
    tables: Mapping[str, pd.DataFrame],
) -> ExperimentArtifacts:
    """Write every table, then summary.json, then provenance.json."""
    d = experiment_dir(root_dir, summary.experiment)
    out = ExperimentArtifacts(experiment=summary.experiment, directory=d)
    for name in sorted(tables):
        out.files.append(write_table(d, name, tables[name]))
    out.files.append(write_json(d, "summary", summary.to_dict()))
    out.files.append(write_json(d, "provenance", provenance.to_dict()))
    return out


def load_summary(directory: Path) -> dict[str, Any]:
    return json.loads((Path(directory) / "summary.json").read_text(encoding="utf-8"))


def _write_bytes_atomic(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)

    with tempfile.NamedTemporaryFile(
        mode="wb",
        delete=False,
        dir=str(path.parent),
        prefix=f".{path.name}.tmp-",
    ) as tmp:
        tmp.write(data)
        tmp.flush()
        os.fsync(tmp.fileno())
        tmp_name = tmp.name

    Path(tmp_name).replace(path)
