# src/skewlab/fixtures.py
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True, slots=True)
class Fixture:
    name: str
    description: str
    text: str


@dataclass(frozen=True, slots=True)
class FixtureWriteResult:
    path: Path
    created: bool
    overwritten: bool


_PRODUCT = """# skewlab.yml (fixture: product)
#
# Trivial coupling: the fiber map ignores the base, so unstable leaves are
# horizontal in theta and the hitting averages converge immediately.

system-settings:
  matrix: [[2, 1], [1, 1]]
  kappa: 0.5
  delta: 0.0
  alpha: 0.0

sampling-settings:
  source: [0.3141, 0.2718, 0.25]
  n_particles: 100000
  n_iterates: 100
  burn_in: 50

run-settings:
  seed: 0
  output_dir: skewlab-out
"""

_COUPLED = """# skewlab.yml (fixture: coupled)
#
# Base-dependent fiber map: the reference configuration for every lab.

system-settings:
  matrix: [[2, 1], [1, 1]]
  kappa: 0.5
  delta: 0.05
  alpha: 0.0

sampling-settings:
  source: [0.3141, 0.2718, 0.25]
  n_particles: 100000
  n_iterates: 100
  burn_in: 50

coupling-settings:
  second: [0.7071, 0.1618, 0.6]
  n_pairs: 10000

run-settings:
  seed: 0
  output_dir: skewlab-out
"""

_ISOMETRIC = """# skewlab.yml (fixture: isometric-control)
#
# Irrational rotation in the fiber: partially hyperbolic but with a zero
# center exponent, so every contraction gate must reject it.

system-settings:
  matrix: [[2, 1], [1, 1]]
  kappa: 0.0
  delta: 0.0
  alpha: 0.6180339887498949

sampling-settings:
  source: [0.3141, 0.2718, 0.25]

run-settings:
  seed: 0
  output_dir: skewlab-out
"""

FIXTURES: dict[str, Fixture] = {
    "product": Fixture("product", "delta=0, kappa=0.5: fiber map independent of the base", _PRODUCT),
    "coupled": Fixture("coupled", "delta=0.05, kappa=0.5: the reference configuration", _COUPLED),
    "isometric-control": Fixture(
        "isometric-control",
        "kappa=0, irrational rotation: negative control, rejected by contraction gates",
        _ISOMETRIC,
    ),
}


def fixture_names() -> list[str]:
    return list(FIXTURES)


def get_fixture(name: str) -> Fixture:
    try:
        return FIXTURES[name]
    except KeyError:
        raise ValueError(f"unknown fixture {name!r}; expected one of {fixture_names()}") from None


def fixture_text(name: str) -> str:
    return get_fixture(name).text


def write_fixture(name: str, path: str | Path, *, force: bool = False) -> FixtureWriteResult:
    """Write a shipped fixture as an editable config file."""
    text = fixture_text(name)
    p = Path(path).expanduser().resolve()

    if p.exists() and not force:
        raise FileExistsError(f"Config file already exists: {p}")

    existed = p.exists()
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text, encoding="utf-8")

    return FixtureWriteResult(path=p, created=not existed, overwritten=existed)
