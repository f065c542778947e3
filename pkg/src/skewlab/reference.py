# src/skewlab/reference.py
from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np
import pandas as pd

from .estimators import ks_2d
from .partition import (
    MarkovPartition,
    SymbolicCylinder,
    chart_point,
    cylinder_levels,
    locate_with_chart,
    word_map,
)
from .system import (
    LeafSegment,
    SkewSystem,
    cs_holonomy,
    leaf_segment,
    plaque_base,
    plaque_fiber,
)
from .torus import apply_auto, shortest_lift

logger = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True, eq=False)
class ReferenceMeasure:
    """
    ν^u on the plaque ξ^u_i(x): uniform in the plaque coordinate [0, L_u(i)],
    with fibers evaluated on demand along the leaf.
    """

    index: int
    leaf: LeafSegment
    length: float

    @property
    def marked(self) -> np.ndarray:
        return self.leaf.marked[0]


def reference_measure(sys: SkewSystem, P: MarkovPartition, p: Any) -> ReferenceMeasure:
    leaf = leaf_segment(sys, P, np.asarray(p, dtype=float).reshape(1, 3))
    i = int(leaf.index[0])
    return ReferenceMeasure(index=i, leaf=leaf, length=float(leaf.length[0]))


def points_at(sys: SkewSystem, P: MarkovPartition, m: ReferenceMeasure, a: Any) -> np.ndarray:
    """Skew points of the plaque at plaque coordinates `a`."""
    coords = np.asarray(a, dtype=float).ravel()
    base = plaque_base(P, m.leaf, coords)
    theta = plaque_fiber(sys, m.leaf, coords)
    return np.column_stack([base, theta])


def sample_coords(m: ReferenceMeasure, rng: np.random.Generator, count: int) -> np.ndarray:
    return rng.uniform(0.0, m.length, size=int(count))


def sample(sys: SkewSystem, P: MarkovPartition, m: ReferenceMeasure, rng: np.random.Generator, count: int) -> np.ndarray:
    return points_at(sys, P, m, sample_coords(m, rng, count))


def cylinder_mass(P: MarkovPartition, m: ReferenceMeasure, w: SymbolicCylinder | Sequence[int]) -> float:
    """Exact ν^u mass of a cylinder: the product of subcylinder weights along its word."""
    word = tuple(w.word) if isinstance(w, SymbolicCylinder) else tuple(int(v) for v in w)
    if not word:
        return 1.0
    if word[0] != m.index:
        raise ValueError(f"cylinder starts at {word[0]}, reference plaque lies in {m.index}")
    word_map(P, word)
    mass = 1.0
    for a, b in zip(word[:-1], word[1:]):
        mass *= float(P.weights[a, b])
    return mass


def check_cs_invariance(
    sys: SkewSystem,
    P: MarkovPartition,
    x: Any,
    y: Any,
    n_samples: int,
    rng: np.random.Generator,
) -> float:
    """
    2D KS statistic between H^cs_{x,y} pushed samples of ν^u_x and direct
    samples of ν^u_y, both in (plaque coordinate, fiber) form.
    """
    mx = reference_measure(sys, P, x)
    my = reference_measure(sys, P, y)
    if mx.index != my.index:
        raise ValueError("check_cs_invariance needs x and y in the same rectangle")

    zx = sample(sys, P, mx, rng, n_samples)
    pushed = cs_holonomy(sys, P, np.broadcast_to(mx.marked, zx.shape), np.broadcast_to(my.marked, zx.shape), zx)
    _, _, chart = locate_with_chart(P, pushed[:, :2])
    pushed_coords = np.column_stack([chart[:, 0] + 0.5 * my.length, pushed[:, 2]])

    direct_a = sample_coords(my, rng, n_samples)
    direct = np.column_stack([direct_a, plaque_fiber(sys, my.leaf, direct_a)])
    stat = ks_2d(pushed_coords, direct)
    logger.info("cs invariance KS=%.4f on rectangle %d", stat, mx.index)
    return stat


@dataclass(frozen=True, slots=True)
class JacobianCheck:
    i: int
    j: int
    spread: float
    mean: float
    weight: float
    n_plaques: int


def check_constant_jacobian(
    sys: SkewSystem,
    P: MarkovPartition,
    i: int,
    j: int,
    n_plaques: int,
    rng: np.random.Generator,
) -> JacobianCheck:
    """
    ν^u_{i,x}(f^{-1} ξ^u_j(f x)) for random plaques, measured geometrically
    by pulling the image plaque's endpoints back through A.
    """
    if not P.transition[i, j]:
        raise ValueError(f"transition {i}->{j} is not allowed")
    r = P.rectangles[i]
    auto = P.auto

    found: list[np.ndarray] = []
    found_u: list[np.ndarray] = []
    attempts = 0
    while sum(len(f) for f in found) < n_plaques:
        attempts += 1
        if attempts > 100:
            raise RuntimeError(f"could not sample plaques of {i} landing in {j}")
        u = rng.uniform(-0.5 * r.lu, 0.5 * r.lu, 4 * n_plaques)
        s = rng.uniform(-0.45 * r.ls, 0.45 * r.ls, 4 * n_plaques)
        pts = chart_point(P, np.full(u.shape, i), u, s)
        img = apply_auto(auto, pts, 1)
        idx, inner, _ = locate_with_chart(P, img)
        keep = (idx == j) & inner
        found.append(pts[keep])
        found_u.append(u[keep])
    pts = np.concatenate(found)[:n_plaques]
    u_pts = np.concatenate(found_u)[:n_plaques]

    img = apply_auto(auto, pts, 1)
    _, _, img_chart = locate_with_chart(P, img)
    lu_j = P.rectangles[j].lu
    ends = [
        apply_auto(auto, chart_point(P, np.full(len(pts), j), np.full(len(pts), sign * 0.5 * lu_j), img_chart[:, 1]), -1)
        for sign in (-1.0, 1.0)
    ]
    coords = []
    for e in ends:
        d = shortest_lift(e - pts) @ auto.inverse_basis.T
        coords.append(u_pts + d[:, 0])
    mass = np.abs(coords[1] - coords[0]) / r.lu

    return JacobianCheck(
        i=int(i),
        j=int(j),
        spread=float(np.max(mass) - np.min(mass)),
        mean=float(np.mean(mass)),
        weight=float(P.weights[i, j]),
        n_plaques=int(len(pts)),
    )


def boundary_nullity(
    m: ReferenceMeasure,
    rng: np.random.Generator,
    count: int,
    eps_values: Sequence[float] = (1e-2, 1e-3, 1e-4),
) -> pd.DataFrame:
    """Fraction of ν^u samples within eps of the stable boundary of the plaque."""
    a = sample_coords(m, rng, count)
    rows = []
    for eps in eps_values:
        near = np.minimum(a, m.length - a) < eps
        frac = float(np.mean(near))
        rows.append({"eps": float(eps), "fraction": frac, "expected": min(1.0, 2.0 * eps / m.length)})
    return pd.DataFrame(rows)


def overlap_equivalence(P: MarkovPartition, n: int) -> float:
    """
    Max relative deviation of mass·L_u(start) from L_u(end)·lambda_u^{-n}
    over all depth-n cylinders of every start rectangle.

    Cylinders from different starts that reach the same plaque piece carry
    masses in the ratio of the start lengths.
    """
    worst = 0.0
    lam = P.auto.lambda_u
    for i in range(P.k):
        level = cylinder_levels(P, i, n)[-1]
        mass = np.abs(level.scale) * P.lu[level.end] / P.lu[i]
        expected = P.lu[level.end] * lam ** (-n) / P.lu[i]
        worst = max(worst, float(np.max(np.abs(mass / expected - 1.0))))
    return worst
