# src/skewlab/partition.py
from __future__ import annotations

import logging
import math
from collections.abc import Iterator, Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np
import pandas as pd

from .torus import (
    CAT_MATRIX,
    INJECTIVITY_RADIUS,
    ToralAutomorphism,
    apply_auto,
    bracket,
    shortest_lift,
    wrap,
)

logger = logging.getLogger(__name__)

DEFAULT_BOUNDARY_TOL: float = 1e-9
DEFAULT_CYLINDER_CAP: int = 16
_OVERLAP_TOL: float = 1e-12


@dataclass(frozen=True, slots=True)
class Rectangle:
    """
    A rectangle of the partition: an axis-aligned box in eigencoordinates.

    `centre` is a torus point, `centre_eigen` the eigencoordinates of its
    canonical lift; `anchor` is the corner at (-lu/2, -ls/2) from the centre.
    Plaque coordinates along e_u run over [0, lu].
    """

    index: int
    centre: tuple[float, float]
    centre_eigen: tuple[float, float]
    anchor: tuple[float, float]
    lu: float
    ls: float


@dataclass(frozen=True, slots=True)
class PlaqueSegment:
    index: int
    kind: str
    origin: tuple[float, float]
    direction: tuple[float, float]
    length: float
    position: float

    def point(self, a: Any) -> np.ndarray:
        a_arr = np.asarray(a, dtype=float)
        return wrap(np.asarray(self.origin) + a_arr[..., None] * np.asarray(self.direction))


@dataclass(frozen=True, slots=True)
class SymbolicCylinder:
    """
    A word i_0 -> ... -> i_n together with its affine plaque map.

    A point with coordinate b on the image plaque in rectangle i_n sits at
    coordinate offset + scale * b on the start plaque.
    """

    word: tuple[int, ...]
    offset: float
    scale: float
    lo: float
    width: float

    @property
    def depth(self) -> int:
        return len(self.word) - 1

    @property
    def start(self) -> int:
        return self.word[0]

    @property
    def end(self) -> int:
        return self.word[-1]


@dataclass(frozen=True, slots=True)
class CylinderLevel:
    offset: np.ndarray
    scale: np.ndarray
    end: np.ndarray
    parent: np.ndarray


@dataclass(frozen=True, slots=True)
class CylinderTable:
    start: int
    depth: int
    offset: np.ndarray
    scale: np.ndarray
    end: np.ndarray
    lo: np.ndarray
    width: np.ndarray

    def __len__(self) -> int:
        return int(self.offset.shape[0])

    def midpoints(self) -> np.ndarray:
        return self.lo + 0.5 * self.width

    def find(self, coords: np.ndarray) -> np.ndarray:
        """Index of the cylinder containing each plaque coordinate."""
        order = np.argsort(self.lo, kind="stable")
        pos = np.searchsorted(self.lo[order], np.asarray(coords, dtype=float), side="right") - 1
        return order[np.clip(pos, 0, len(order) - 1)]


@dataclass(frozen=True, slots=True, eq=False)
class MarkovPartition:
    auto: ToralAutomorphism
    rectangles: tuple[Rectangle, ...]
    transition: np.ndarray
    multiplicity: np.ndarray
    translate: np.ndarray
    offset: np.ndarray
    shift: np.ndarray
    weights: np.ndarray
    boundary_tol: float = DEFAULT_BOUNDARY_TOL
    cylinder_cap: int = DEFAULT_CYLINDER_CAP

    @property
    def k(self) -> int:
        return len(self.rectangles)

    @property
    def lu(self) -> np.ndarray:
        return np.array([r.lu for r in self.rectangles])

    @property
    def ls(self) -> np.ndarray:
        return np.array([r.ls for r in self.rectangles])

    @property
    def centres(self) -> np.ndarray:
        return np.array([r.centre for r in self.rectangles])

    @property
    def centres_eigen(self) -> np.ndarray:
        return np.array([r.centre_eigen for r in self.rectangles])

    @property
    def scale(self) -> float:
        """Slope of every subcylinder plaque map."""
        return 1.0 / self.auto.mu_u

    def area(self, i: int) -> float:
        r = self.rectangles[i]
        return abs(float(np.linalg.det(self.auto.basis))) * r.lu * r.ls

    def circumradius(self, i: int) -> float:
        r = self.rectangles[i]
        e_u = np.asarray(self.auto.e_u)
        e_s = np.asarray(self.auto.e_s)
        d1 = np.linalg.norm(r.lu * e_u + r.ls * e_s)
        d2 = np.linalg.norm(r.lu * e_u - r.ls * e_s)
        return 0.5 * float(max(d1, d2))

    def successors(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.transition[i])


# ---------------------------------------------------------------------------
# Box geometry in the eigen plane
# ---------------------------------------------------------------------------


def _lattice_shifts(auto: ToralAutomorphism, reach: float) -> tuple[np.ndarray, np.ndarray]:
    """Eigencoordinates of integer vectors (m, n) within the given eigen reach."""
    w = int(math.ceil(np.linalg.norm(auto.basis, 2) * reach)) + 1
    ms, ns = np.meshgrid(np.arange(-w, w + 1), np.arange(-w, w + 1), indexing="ij")
    ints = np.stack([ms.ravel(), ns.ravel()], axis=-1)
    return ints, ints.astype(float) @ auto.inverse_basis.T


def _box_overlaps(
    auto: ToralAutomorphism,
    centres_a: np.ndarray,
    half_a: np.ndarray,
    centres_b: np.ndarray,
    half_b: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    All positive-area intersections box_a ∩ (box_b + l) over lattice translates l.

    Returns (ia, ib, lattice ints, lo, hi, lattice eigen) for each overlap.
    """
    reach = (
        float(np.max(np.linalg.norm(centres_a, axis=1)))
        + float(np.max(np.linalg.norm(centres_b, axis=1)))
        + float(np.max(np.linalg.norm(half_a, axis=1)))
        + float(np.max(np.linalg.norm(half_b, axis=1)))
    )
    ints, shifts = _lattice_shifts(auto, reach)

    ca = centres_a[:, None, None, :]
    ha = half_a[:, None, None, :]
    cb = centres_b[None, :, None, :] + shifts[None, None, :, :]
    hb = half_b[None, :, None, :]

    lo = np.maximum(ca - ha, cb - hb)
    hi = np.minimum(ca + ha, cb + hb)
    ok = np.all(hi - lo > _OVERLAP_TOL, axis=-1)

    ia, ib, il = np.nonzero(ok)
    return ia, ib, ints[il], lo[ia, ib, il], hi[ia, ib, il], shifts[il]


def _reanchor(auto: ToralAutomorphism, centres: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    torus = wrap(centres @ auto.basis.T)
    return torus, torus @ auto.inverse_basis.T


def _join(
    auto: ToralAutomorphism,
    centres: np.ndarray,
    half: np.ndarray,
    other_centres: np.ndarray,
    other_half: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    _, _, _, lo, hi, _ = _box_overlaps(auto, centres, half, other_centres, other_half)
    new_centres = 0.5 * (lo + hi)
    new_half = 0.5 * (hi - lo)
    _, anchored = _reanchor(auto, new_centres)
    return anchored, new_half


def _assemble(
    auto: ToralAutomorphism,
    centres: np.ndarray,
    half: np.ndarray,
    *,
    boundary_tol: float,
    cylinder_cap: int,
) -> MarkovPartition:
    torus, eig = _reanchor(auto, centres)
    order = np.lexsort((np.round(torus[:, 1], 12), np.round(torus[:, 0], 12)))
    torus, eig, half = torus[order], eig[order], half[order]

    k = len(eig)
    basis = auto.basis
    rects: list[Rectangle] = []
    for idx in range(k):
        corner = wrap((eig[idx] - half[idx]) @ basis.T)
        rects.append(
            Rectangle(
                index=idx,
                centre=(float(torus[idx, 0]), float(torus[idx, 1])),
                centre_eigen=(float(eig[idx, 0]), float(eig[idx, 1])),
                anchor=(float(corner[0]), float(corner[1])),
                lu=float(2.0 * half[idx, 0]),
                ls=float(2.0 * half[idx, 1]),
            )
        )

    diag = auto.diagonal
    img_centres = eig * diag
    img_half = half * np.abs(diag)
    ia, ib, ints, lo, hi, shifts = _box_overlaps(auto, img_centres, img_half, eig, half)

    multiplicity = np.zeros((k, k), dtype=int)
    translate = np.zeros((k, k, 2), dtype=int)
    offset = np.zeros((k, k, 2))
    best_area = np.zeros((k, k))
    for a, b, m, low, high, sh in zip(ia, ib, ints, lo, hi, shifts):
        multiplicity[a, b] += 1
        area = float(np.prod(high - low))
        if area > best_area[a, b]:
            best_area[a, b] = area
            translate[a, b] = m
            offset[a, b] = img_centres[a] - eig[b] - sh

    transition = (multiplicity > 0).astype(int)
    lu = 2.0 * half[:, 0]
    mu_u = auto.mu_u
    # chart u of the image: mu_u * u + offset_u; plaque coordinate a = u + lu/2
    kappa = offset[:, :, 0] + 0.5 * lu[None, :] - 0.5 * mu_u * lu[:, None]
    shift = np.where(transition > 0, -kappa / mu_u, 0.0)
    weights = np.where(transition > 0, lu[None, :] / (auto.lambda_u * lu[:, None]), 0.0)

    partition = MarkovPartition(
        auto=auto,
        rectangles=tuple(rects),
        transition=transition,
        multiplicity=multiplicity,
        translate=translate,
        offset=offset,
        shift=shift,
        weights=weights,
        boundary_tol=float(boundary_tol),
        cylinder_cap=int(cylinder_cap),
    )
    logger.debug("assembled partition with %d rectangles", k)
    return partition


def builtin_cat_partition(
    auto: ToralAutomorphism,
    *,
    refine: int = 1,
    boundary_tol: float = DEFAULT_BOUNDARY_TOL,
    cylinder_cap: int = DEFAULT_CYLINDER_CAP,
) -> MarkovPartition:
    """
    Markov partition of the cat map from the two-square eigen tiling.

    The squares [0,c]^2 and [c-s,c]x[c,c+s] (c, s the components of e_u)
    tile the plane modulo the lattice with all edges on W^s(0) and W^u(0).
    Each refinement level joins with the images under A^l and A^-l.
    """
    if auto.matrix != CAT_MATRIX:
        raise ValueError(f"builtin partition requires the matrix {[list(r) for r in CAT_MATRIX]}")
    if refine < 0:
        raise ValueError("refine must be >= 0")

    c, s = auto.e_u
    base_centres = np.array([[c / 2.0, c / 2.0], [c - s / 2.0, c + s / 2.0]])
    base_half = np.array([[c / 2.0, c / 2.0], [s / 2.0, s / 2.0]])

    centres, half = base_centres.copy(), base_half.copy()
    diag = auto.diagonal
    for level in range(1, refine + 1):
        for power in (level, -level):
            d = diag**power
            centres, half = _join(auto, centres, half, base_centres * d, base_half * np.abs(d))

    return _assemble(auto, centres, half, boundary_tol=boundary_tol, cylinder_cap=cylinder_cap)


def partition_from_rectangles(
    auto: ToralAutomorphism,
    specs: Sequence[Sequence[float]],
    *,
    boundary_tol: float = DEFAULT_BOUNDARY_TOL,
    cylinder_cap: int = DEFAULT_CYLINDER_CAP,
) -> MarkovPartition:
    """Build a partition from (anchor_x1, anchor_x2, lu, ls) rows; not verified here."""
    if not specs:
        raise ValueError("a partition needs at least one rectangle")
    centres: list[np.ndarray] = []
    halves: list[np.ndarray] = []
    for row in specs:
        if len(row) != 4:
            raise ValueError(f"rectangle row must be (anchor_x1, anchor_x2, lu, ls), got {row!r}")
        x1, x2, lu, ls = (float(v) for v in row)
        if lu <= 0 or ls <= 0:
            raise ValueError("rectangle extents must be positive")
        corner = wrap([x1, x2]) @ auto.inverse_basis.T
        centres.append(corner + np.array([lu / 2.0, ls / 2.0]))
        halves.append(np.array([lu / 2.0, ls / 2.0]))
    return _assemble(
        auto,
        np.array(centres),
        np.array(halves),
        boundary_tol=boundary_tol,
        cylinder_cap=cylinder_cap,
    )


# ---------------------------------------------------------------------------
# Membership and plaques
# ---------------------------------------------------------------------------


def locate_with_chart(P: MarkovPartition, points: Any) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Vectorised membership for an (n, 2) array.

    Returns (index, interior, chart) where chart holds (u, s) relative to the
    centre of the chosen rectangle. Ties go to the lowest index; points that
    no closed rectangle contains snap to the nearest one and are flagged.
    """
    pts = wrap(np.asarray(points, dtype=float).reshape(-1, 2))
    tol = P.boundary_tol
    d = shortest_lift(pts[None, :, :] - P.centres[:, None, :])
    us = d @ P.auto.inverse_basis.T
    hu = 0.5 * P.lu[:, None]
    hs = 0.5 * P.ls[:, None]
    excess = np.maximum(np.abs(us[..., 0]) - hu, np.abs(us[..., 1]) - hs)

    closed = excess <= tol
    hit = closed.any(axis=0)
    first = np.argmax(closed, axis=0)
    nearest = np.argmin(excess, axis=0)
    index = np.where(hit, first, nearest)

    cols = np.arange(pts.shape[0])
    chosen = excess[index, cols]
    interior = hit & (chosen < -tol)
    chart = us[index, cols]
    return index, interior, chart


def locate(P: MarkovPartition, p: Any) -> tuple[Any, Any]:
    arr = np.asarray(p, dtype=float)
    index, interior, _ = locate_with_chart(P, arr)
    if arr.ndim == 1:
        return int(index[0]), bool(interior[0])
    return index, interior


def chart_point(P: MarkovPartition, index: Any, u: Any, s: Any) -> np.ndarray:
    """Torus point at chart coordinates (u, s) of rectangle `index`."""
    idx = np.asarray(index, dtype=int)
    us = np.stack(np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(s, dtype=float)), axis=-1)
    return wrap(P.centres[idx] + us @ P.auto.basis.T)


def plaque_point(P: MarkovPartition, index: Any, a: Any, s: Any) -> np.ndarray:
    """Torus point at plaque coordinate `a` on the unstable plaque at height `s`."""
    idx = np.asarray(index, dtype=int)
    return chart_point(P, idx, np.asarray(a, dtype=float) - 0.5 * P.lu[idx], s)


def unstable_plaque(P: MarkovPartition, p: Any) -> PlaqueSegment:
    index, interior, chart = locate_with_chart(P, p)
    if not interior[0]:
        raise ValueError("ambiguous plaque: point lies on a rectangle boundary")
    i = int(index[0])
    u, s = chart[0]
    lu = P.rectangles[i].lu
    origin = chart_point(P, i, -0.5 * lu, s)
    return PlaqueSegment(
        index=i,
        kind="u",
        origin=(float(origin[0]), float(origin[1])),
        direction=P.auto.e_u,
        length=lu,
        position=float(u + 0.5 * lu),
    )


def stable_plaque(P: MarkovPartition, p: Any) -> PlaqueSegment:
    index, interior, chart = locate_with_chart(P, p)
    if not interior[0]:
        raise ValueError("ambiguous plaque: point lies on a rectangle boundary")
    i = int(index[0])
    u, s = chart[0]
    ls = P.rectangles[i].ls
    origin = chart_point(P, i, u, -0.5 * ls)
    return PlaqueSegment(
        index=i,
        kind="s",
        origin=(float(origin[0]), float(origin[1])),
        direction=P.auto.e_s,
        length=ls,
        position=float(s + 0.5 * ls),
    )


def stable_boundary_distance(P: MarkovPartition, points: Any) -> np.ndarray:
    """Distance along e_u to the stable sides of the containing rectangle."""
    index, _, chart = locate_with_chart(P, points)
    return np.maximum(0.5 * P.lu[index] - np.abs(chart[:, 0]), 0.0)


# ---------------------------------------------------------------------------
# Symbolic dynamics
# ---------------------------------------------------------------------------


def perron_eigenvalue(T: np.ndarray, *, tol: float = 1e-14, max_iter: int = 100_000) -> float:
    """Leading eigenvalue of a non-negative primitive matrix by power iteration."""
    m = np.asarray(T, dtype=float)
    v = np.ones(m.shape[0]) / m.shape[0]
    estimate = 0.0
    for _ in range(max_iter):
        w = m @ v
        rayleigh = float(v @ w) / float(v @ v)
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            raise ValueError("transition matrix is nilpotent")
        v = w / norm
        if abs(rayleigh - estimate) < tol * max(1.0, abs(rayleigh)):
            return rayleigh
        estimate = rayleigh
    raise RuntimeError("power iteration did not converge")


def cylinder_count(P: MarkovPartition, i: int, n: int, *, end: int | None = None) -> int:
    row = np.zeros(P.k, dtype=np.int64)
    row[i] = 1
    for _ in range(n):
        row = row @ P.transition
    return int(row.sum() if end is None else row[end])


def _check_depth(P: MarkovPartition, n: int) -> None:
    if n < 0:
        raise ValueError("cylinder depth must be >= 0")
    if n > P.cylinder_cap:
        raise ValueError(f"cylinder explosion: depth {n} exceeds cap {P.cylinder_cap}")


def cylinder_levels(P: MarkovPartition, i: int, n: int) -> list[CylinderLevel]:
    """
    Breadth-first cylinder tables for depths 0..n from rectangle i.

    Children of each parent are contiguous and in increasing symbol order,
    so every level is in lexicographic word order.
    """
    _check_depth(P, n)
    k = P.k
    deg = P.transition.sum(axis=1)
    succ = np.full((k, max(int(deg.max()), 1)), -1, dtype=int)
    for r in range(k):
        js = np.flatnonzero(P.transition[r])
        succ[r, : len(js)] = js

    scale = P.scale
    levels = [
        CylinderLevel(
            offset=np.zeros(1),
            scale=np.ones(1),
            end=np.array([i], dtype=int),
            parent=np.array([-1], dtype=int),
        )
    ]
    for _ in range(n):
        cur = levels[-1]
        counts = deg[cur.end]
        parent = np.repeat(np.arange(len(cur.end)), counts)
        starts = np.cumsum(counts) - counts
        rank = np.arange(parent.shape[0]) - np.repeat(starts, counts)
        pend = cur.end[parent]
        child = succ[pend, rank]
        psc = cur.scale[parent]
        levels.append(
            CylinderLevel(
                offset=cur.offset[parent] + psc * P.shift[pend, child],
                scale=psc * scale,
                end=child,
                parent=parent,
            )
        )
    return levels


def _table_from_level(P: MarkovPartition, i: int, n: int, level: CylinderLevel) -> CylinderTable:
    width = np.abs(level.scale) * P.lu[level.end]
    far = level.offset + level.scale * P.lu[level.end]
    return CylinderTable(
        start=i,
        depth=n,
        offset=level.offset,
        scale=level.scale,
        end=level.end,
        lo=np.minimum(level.offset, far),
        width=width,
    )


def cylinder_table(P: MarkovPartition, i: int, n: int, *, end: int | None = None) -> CylinderTable:
    level = cylinder_levels(P, i, n)[-1]
    if end is not None:
        keep = level.end == end
        level = CylinderLevel(
            offset=level.offset[keep],
            scale=level.scale[keep],
            end=level.end[keep],
            parent=level.parent[keep],
        )
    return _table_from_level(P, i, n, level)


def enumerate_cylinders(P: MarkovPartition, i: int, n: int) -> Iterator[SymbolicCylinder]:
    """Stream every depth-n cylinder from rectangle i in lexicographic order."""
    _check_depth(P, n)
    lu = P.lu
    stack: list[tuple[tuple[int, ...], float, float]] = [((i,), 0.0, 1.0)]
    while stack:
        word, off, sc = stack.pop()
        if len(word) == n + 1:
            end = word[-1]
            far = off + sc * lu[end]
            yield SymbolicCylinder(
                word=word,
                offset=off,
                scale=sc,
                lo=float(min(off, far)),
                width=float(abs(sc) * lu[end]),
            )
            continue
        last = word[-1]
        for j in reversed(P.successors(last).tolist()):
            stack.append((word + (j,), off + sc * float(P.shift[last, j]), sc * P.scale))


def word_map(P: MarkovPartition, word: Sequence[int]) -> tuple[float, float]:
    """(offset, scale) of an admissible word; raises for inadmissible words."""
    off, sc = 0.0, 1.0
    for a, b in zip(word[:-1], word[1:]):
        if not P.transition[a, b]:
            raise ValueError(f"inadmissible word: transition {a}->{b} is not allowed")
        off += sc * float(P.shift[a, b])
        sc *= P.scale
    return off, sc


def itinerary(
    P: MarkovPartition,
    start: Any,
    coords: Any,
    m: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Symbolic descent of plaque coordinates for m steps.

    Returns (words (n, m+1), offset, scale, final coordinate) with
    coord = offset + scale * final on the start plaque.
    """
    a = np.asarray(coords, dtype=float).ravel().copy()
    cur = np.broadcast_to(np.asarray(start, dtype=int), a.shape).copy()
    words = np.empty((a.shape[0], m + 1), dtype=int)
    words[:, 0] = cur
    off = np.zeros_like(a)
    sc = np.ones_like(a)
    lu = P.lu
    for t in range(m):
        nxt = np.empty_like(cur)
        for r in np.unique(cur):
            mask = cur == r
            js = P.successors(int(r))
            los = np.minimum(P.shift[r, js], P.shift[r, js] + P.scale * lu[js])
            order = np.argsort(los)
            pos = np.searchsorted(los[order], a[mask], side="right") - 1
            nxt[mask] = js[order][np.clip(pos, 0, len(js) - 1)]
        sh = P.shift[cur, nxt]
        off = off + sc * sh
        sc = sc * P.scale
        a = (a - sh) / P.scale
        cur = nxt
        words[:, t + 1] = cur
    return words, off, sc, a


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class MarkovReport:
    n_samples: int
    covering: int
    disjointness: int
    product_structure: int
    unstable_inclusion: int
    stable_inclusion: int
    diameter: int
    multiplicity: int
    weight_sum_error: float
    area_error: float
    perron: float

    @property
    def violations(self) -> int:
        return (
            self.covering
            + self.disjointness
            + self.product_structure
            + self.unstable_inclusion
            + self.stable_inclusion
            + self.diameter
            + self.multiplicity
        )

    @property
    def passed(self) -> bool:
        return self.violations == 0 and self.weight_sum_error < 1e-9

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_samples": self.n_samples,
            "covering": self.covering,
            "disjointness": self.disjointness,
            "product_structure": self.product_structure,
            "unstable_inclusion": self.unstable_inclusion,
            "stable_inclusion": self.stable_inclusion,
            "diameter": self.diameter,
            "multiplicity": self.multiplicity,
            "weight_sum_error": self.weight_sum_error,
            "area_error": self.area_error,
            "perron": self.perron,
            "violations": self.violations,
            "passed": self.passed,
        }


def _chart_in(P: MarkovPartition, index: np.ndarray, points: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    d = shortest_lift(points - P.centres[index])
    us = d @ P.auto.inverse_basis.T
    ok = (np.abs(us[:, 0]) <= 0.5 * P.lu[index] + tol) & (np.abs(us[:, 1]) <= 0.5 * P.ls[index] + tol)
    return ok, us


def verify_markov(
    P: MarkovPartition,
    n_samples: int,
    rng: np.random.Generator,
    *,
    tol: float = 1e-7,
) -> MarkovReport:
    """Sampled violation counts of covering, disjointness, product structure and both inclusions."""
    auto = P.auto
    pts = rng.random((n_samples, 2))

    d = shortest_lift(pts[None, :, :] - P.centres[:, None, :])
    us = d @ auto.inverse_basis.T
    excess = np.maximum(np.abs(us[..., 0]) - 0.5 * P.lu[:, None], np.abs(us[..., 1]) - 0.5 * P.ls[:, None])
    covering = int(np.sum(~np.any(excess <= P.boundary_tol, axis=0)))
    disjointness = int(np.sum(np.sum(excess < -P.boundary_tol, axis=0) > 1))

    diameter = sum(1 for i in range(P.k) if P.circumradius(i) >= 0.5 * INJECTIVITY_RADIUS)
    multiplicity = int(np.sum(P.multiplicity > 1))

    index, interior, chart = locate_with_chart(P, pts)

    # product structure on pairs inside the same rectangle
    partner = rng.permutation(n_samples)
    same = interior & interior[partner] & (index == index[partner])
    product = 0
    if diameter == 0 and np.any(same):
        a = pts[same]
        b = pts[partner][same]
        idx = index[same]
        try:
            q = bracket(auto, a, b, INJECTIVITY_RADIUS)
        except ValueError:
            product = int(np.sum(same))
        else:
            ok, q_us = _chart_in(P, idx, q, tol)
            expect_u = chart[partner][same][:, 0]
            expect_s = chart[same][:, 1]
            good = ok & (np.abs(q_us[:, 0] - expect_u) < tol) & (np.abs(q_us[:, 1] - expect_s) < tol)
            product = int(np.sum(~good))
    elif diameter > 0:
        product = int(np.sum(same))

    img = apply_auto(auto, pts, 1)
    j_index, j_interior, j_chart = locate_with_chart(P, img)
    both = interior & j_interior
    unstable = 0
    stable = 0
    if np.any(both):
        i_idx = index[both]
        j_idx = j_index[both]
        s_img = j_chart[both][:, 1]
        u_pre = chart[both][:, 0]
        s_pre = chart[both][:, 1]
        for sign in (-1.0, 1.0):
            end = chart_point(P, j_idx, sign * 0.5 * P.lu[j_idx], s_img)
            pre = apply_auto(auto, end, -1)
            ok, pre_us = _chart_in(P, i_idx, pre, tol)
            unstable += int(np.sum(~(ok & (np.abs(pre_us[:, 1] - s_pre) < tol))))

            end_s = chart_point(P, i_idx, u_pre, sign * 0.5 * P.ls[i_idx])
            fwd = apply_auto(auto, end_s, 1)
            ok_s, fwd_us = _chart_in(P, j_idx, fwd, tol)
            u_img = j_chart[both][:, 0]
            stable += int(np.sum(~(ok_s & (np.abs(fwd_us[:, 0] - u_img) < tol))))

    weight_error = float(np.max(np.abs(P.weights.sum(axis=1) - 1.0)))
    area_error = abs(sum(P.area(i) for i in range(P.k)) - 1.0)
    try:
        perron = perron_eigenvalue(P.transition)
    except (ValueError, RuntimeError):
        perron = float("nan")

    report = MarkovReport(
        n_samples=int(n_samples),
        covering=covering,
        disjointness=disjointness,
        product_structure=product,
        unstable_inclusion=unstable,
        stable_inclusion=stable,
        diameter=diameter,
        multiplicity=multiplicity,
        weight_sum_error=weight_error,
        area_error=float(area_error),
        perron=perron,
    )
    logger.info("verify_markov: %d violations over %d samples", report.violations, n_samples)
    return report


def require_markov(P: MarkovPartition, n_samples: int, rng: np.random.Generator) -> MarkovReport:
    report = verify_markov(P, n_samples, rng)
    if not report.passed:
        raise ValueError(f"partition rejected by verify_markov: {report.to_dict()}")
    return report


# ---------------------------------------------------------------------------
# Tables
# ---------------------------------------------------------------------------


def transition_frame(P: MarkovPartition) -> pd.DataFrame:
    rows: list[dict[str, Any]] = []
    for i in range(P.k):
        for j in range(P.k):
            rows.append(
                {
                    "i": i,
                    "j": j,
                    "allowed": int(P.transition[i, j]),
                    "weight": float(P.weights[i, j]),
                    "multiplicity": int(P.multiplicity[i, j]),
                    "translate_m": int(P.translate[i, j, 0]),
                    "translate_n": int(P.translate[i, j, 1]),
                }
            )
    return pd.DataFrame(rows)


def rectangle_frame(P: MarkovPartition) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "index": r.index,
                "anchor_x1": r.anchor[0],
                "anchor_x2": r.anchor[1],
                "centre_x1": r.centre[0],
                "centre_x2": r.centre[1],
                "lu": r.lu,
                "ls": r.ls,
                "area": P.area(r.index),
                "circumradius": P.circumradius(r.index),
            }
            for r in P.rectangles
        ]
    )
