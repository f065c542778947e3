# src/skewlab/coupling.py
from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree

from .estimators import LogLinearFit, ks_2d, log_linear_fit
from .partition import (
    CylinderLevel,
    CylinderTable,
    MarkovPartition,
    cylinder_levels,
    cylinder_table,
    itinerary,
    locate_with_chart,
    plaque_point,
    word_map,
)
from .reference import ReferenceMeasure, points_at
from .system import SkewState, SkewSystem, advance, cs_norm, leaf_fiber, step
from .torus import eigen_coords, shortest_lift, wrap

logger = logging.getLogger(__name__)

K_GRID: tuple[float, ...] = (1.0, 1.5, 2.0, 3.0, 5.0, 8.0, 13.0, 21.0, 50.0, 100.0, 1000.0)
S_GRID: tuple[float, ...] = (0.25, 0.5, 1.0, 2.0, 4.0)
DEFAULT_CYLINDER_POINTS: int = 33
_VERIFY_POINTS = 9
_CHUNK = 2048


# ---------------------------------------------------------------------------
# Cylinder orbit extrema
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True, eq=False)
class PlaqueFrame:
    """A full unstable plaque of rectangle `end`, marked by a point at plaque coordinate `position`."""

    end: int
    height: float
    position: float
    marked: np.ndarray

    def points(self, sys: SkewSystem, P: MarkovPartition, b: Any) -> np.ndarray:
        coords = np.asarray(b, dtype=float)
        base = plaque_point(P, np.full(coords.shape, self.end), coords, np.full(coords.shape, self.height))
        theta = leaf_fiber(sys, self.marked, coords - self.position)
        return np.concatenate([base, theta[..., None]], axis=-1)


def frame_of(P: MarkovPartition, ref: ReferenceMeasure) -> PlaqueFrame:
    leaf = ref.leaf
    return PlaqueFrame(
        end=int(leaf.index[0]),
        height=float(leaf.height[0]),
        position=float(leaf.position[0]),
        marked=leaf.marked[0].copy(),
    )


def cylinder_sums(
    sys: SkewSystem,
    P: MarkovPartition,
    frame: PlaqueFrame,
    offset: np.ndarray,
    scale: np.ndarray,
    end: np.ndarray,
    depth: int,
    func: Callable[[np.ndarray], np.ndarray],
    lipschitz: float,
    *,
    n_points: int = DEFAULT_CYLINDER_POINTS,
) -> np.ndarray:
    """
    Σ_{t<depth} max over each cylinder of func(f^t z), from `n_points`
    evenly spaced samples per cylinder plus lipschitz·(largest gap)/2.
    """
    count = offset.shape[0]
    out = np.empty(count)
    grid = np.linspace(0.0, 1.0, n_points)
    for lo in range(0, count, _CHUNK):
        hi = min(lo + _CHUNK, count)
        span = scale[lo:hi, None] * P.lu[end[lo:hi], None]
        coords = offset[lo:hi, None] + span * grid[None, :]
        state = SkewState.from_points(frame.points(sys, P, coords).reshape(-1, 3))
        total = np.zeros(hi - lo)
        for _ in range(depth):
            pts = state.points.reshape(hi - lo, n_points, 3)
            values = func(pts.reshape(-1, 3)).reshape(hi - lo, n_points)
            gaps = np.linalg.norm(shortest_lift(np.diff(pts, axis=1)), axis=-1)
            total += values.max(axis=1) + 0.5 * lipschitz * gaps.max(axis=1, initial=0.0)
            state = step(sys, state)
        out[lo:hi] = total
    return out


def log_cs_norm(sys: SkewSystem) -> tuple[Callable[[np.ndarray], np.ndarray], float]:
    """log‖Df|E^cs‖ as a function of points and its Lipschitz constant."""
    lip = 2.0 * math.pi * sys.kappa / (1.0 - sys.kappa)

    def func(points: np.ndarray) -> np.ndarray:
        return np.log(cs_norm(sys, points[:, 2]))

    return func, lip


def _cylinder_mass(P: MarkovPartition, start: int, scale: np.ndarray, end: np.ndarray) -> np.ndarray:
    return np.abs(scale) * P.lu[end] / P.lu[start]


# ---------------------------------------------------------------------------
# Contraction profile
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class ContractionProfile:
    n0: int
    lambda0: float
    lam: float
    K: float
    s1: float
    theta1: float
    q1: float
    epsilon: float
    u_depth: int
    measured_u: tuple[float, ...]
    tail: tuple[tuple[int, float], ...] = ()

    def threshold(self, m: Any) -> np.ndarray:
        """log(K e^{λ m})."""
        return math.log(self.K) + self.lam * np.asarray(m, dtype=float)

    def to_dict(self) -> dict[str, Any]:
        return {
            "n0": self.n0,
            "lambda0": self.lambda0,
            "lambda": self.lam,
            "K": self.K,
            "s1": self.s1,
            "theta1": self.theta1,
            "q1": self.q1,
            "epsilon": self.epsilon,
            "u_depth": self.u_depth,
            "measured_u": list(self.measured_u),
        }


def _support_frames(
    sys: SkewSystem,
    P: MarkovPartition,
    support: np.ndarray,
) -> list[PlaqueFrame]:
    index, interior, chart = locate_with_chart(P, support[:, :2])
    frames = []
    for p, i, ok, c in zip(support, index, interior, chart):
        if not ok:
            continue
        frames.append(
            PlaqueFrame(
                end=int(i),
                height=float(c[1]),
                position=float(c[0] + 0.5 * P.lu[i]),
                marked=p.copy(),
            )
        )
    return frames


@dataclass(frozen=True, slots=True, eq=False)
class PlaqueProducts:
    """log ∏ max‖Df|E^cs‖ for every cylinder of depth 1..depth on one plaque."""

    frame: PlaqueFrame
    levels: tuple[CylinderLevel, ...]
    sums: tuple[np.ndarray, ...]

    @property
    def depth(self) -> int:
        return len(self.sums)


def plaque_products(
    sys: SkewSystem,
    P: MarkovPartition,
    frame: PlaqueFrame,
    depth: int,
    *,
    n_points: int = DEFAULT_CYLINDER_POINTS,
) -> PlaqueProducts:
    func, lip = log_cs_norm(sys)
    levels = cylinder_levels(P, frame.end, depth)
    sums = tuple(
        cylinder_sums(sys, P, frame, lv.offset, lv.scale, lv.end, m, func, lip, n_points=n_points)
        for m, lv in enumerate(levels[1:], start=1)
    )
    return PlaqueProducts(frame=frame, levels=tuple(levels), sums=sums)


def split_by_violation(P: MarkovPartition, prod: PlaqueProducts, K: float, lam: float) -> tuple[dict[int, float], float]:
    """
    ν^u masses of the first-violation sets U^m ∖ ⋃_{m'<m} U^{m'} and of the
    cylinders that never violate up to the profiled depth.
    """
    start = prod.frame.end
    first: dict[int, float] = {}
    alive = np.ones(1, dtype=bool)
    mass = np.ones(1)
    log_k = math.log(K)
    for m in range(1, prod.depth + 1):
        level = prod.levels[m]
        parent_ok = alive[level.parent]
        bad = prod.sums[m - 1] > log_k + lam * m
        mass = _cylinder_mass(P, start, level.scale, level.end)
        first[m] = float(mass[bad & parent_ok].sum())
        alive = parent_ok & ~bad
    return first, float(mass[alive].sum())


def u_mass(
    sys: SkewSystem,
    P: MarkovPartition,
    frame: PlaqueFrame,
    K: float,
    lam: float,
    u_depth: int,
    *,
    n_points: int = DEFAULT_CYLINDER_POINTS,
) -> tuple[float, dict[int, float], float]:
    """
    ν^u mass of U = ⋃_m U^m on one plaque, split by first-violation depth.

    Returns (mass of U, {m: mass first violating at depth m}, mass never
    violating up to u_depth).
    """
    first, never = split_by_violation(P, plaque_products(sys, P, frame, u_depth, n_points=n_points), K, lam)
    return float(sum(first.values())), first, never


def estimate_profile(
    sys: SkewSystem,
    P: MarkovPartition,
    depth_cap: int,
    n_samples: int,
    rng: np.random.Generator,
    *,
    support: np.ndarray | None = None,
    q1: float = 0.5,
    u_depth: int = 8,
    tail_depth: int = 6,
    tail_plaques: int = 3,
    plaque_points: int = 64,
    epsilon: float | None = None,
    eta: float = 0.1,
    n_points: int = DEFAULT_CYLINDER_POINTS,
) -> ContractionProfile:
    """
    Contraction data on plaques through support points of μ.

    n0 is the first depth whose plaque-averaged (1/n)·log‖Df^n|E^cs‖ is
    negative on every sampled plaque; (s1, θ1) come from exact cylinder sums;
    K is the smallest grid value keeping the measured ν^u(U) within q1.
    """
    if not (0.0 < q1 < 1.0):
        raise ValueError("q1 must lie in (0, 1)")
    if support is None:
        start = np.column_stack([rng.random((n_samples, 2)), rng.random(n_samples)])
        support = advance(sys, SkewState.from_points(start), 50).points
    frames = _support_frames(sys, P, np.asarray(support, dtype=float)[:n_samples])
    if not frames:
        raise ValueError("no interior support points to build plaques on")

    func, lip = log_cs_norm(sys)
    n0 = 0
    lambda0 = math.inf
    for n in range(1, depth_cap + 1):
        worst = -math.inf
        for fr in frames:
            a = rng.uniform(0.0, P.lu[fr.end], plaque_points)
            state = SkewState.from_points(fr.points(sys, P, a))
            acc = np.zeros(plaque_points)
            for _ in range(n):
                acc += func(state.points)
                state = step(sys, state)
            worst = max(worst, float(np.mean(acc)) / n)
        if worst < 0.0:
            n0, lambda0 = n, worst
            break
    if n0 == 0:
        raise ValueError(f"not contracting enough: no negative plaque-averaged exponent up to depth {depth_cap}")

    # exponential tail sums Σ_j c_j ∏ max‖Df|E^cs‖^{s1}
    tail_frames = frames[:tail_plaques]
    log_z: dict[tuple[int, float], float] = {}
    for fr in tail_frames:
        for n in range(1, tail_depth + 1):
            table = cylinder_table(P, fr.end, n)
            sums = cylinder_sums(sys, P, fr, table.offset, table.scale, table.end, n, func, lip, n_points=n_points)
            mass = _cylinder_mass(P, fr.end, table.scale, table.end)
            for s in S_GRID:
                z = float(np.log(np.sum(mass * np.exp(s * sums))))
                key = (n, s)
                log_z[key] = max(log_z.get(key, -math.inf), z)
    best_s, best_theta = S_GRID[0], math.inf
    for s in S_GRID:
        theta = math.exp(max(log_z[(n, s)] / (s * n) for n in range(1, tail_depth + 1)))
        if theta < best_theta:
            best_s, best_theta = s, theta
    if best_theta >= 1.0:
        raise ValueError(f"not contracting enough: tail sums give theta1={best_theta:.4f} >= 1")

    lam = max(lambda0 / 2.0, math.log(best_theta) / 2.0)

    products = [plaque_products(sys, P, fr, u_depth, n_points=n_points) for fr in frames]
    chosen_k = None
    measured: list[float] = []
    for K in K_GRID:
        measured = [1.0 - split_by_violation(P, prod, K, lam)[1] for prod in products]
        if max(measured) <= 0.8 * q1:
            chosen_k = K
            break
    if chosen_k is None:
        raise ValueError(f"not contracting enough: ν^u(U) exceeds q1={q1} for every K up to {K_GRID[-1]}")

    if epsilon is None:
        eps = eta / lip if lip > 0 else eta
        epsilon = min(eps, 0.1)

    profile = ContractionProfile(
        n0=n0,
        lambda0=lambda0,
        lam=lam,
        K=float(chosen_k),
        s1=float(best_s),
        theta1=float(best_theta),
        q1=float(q1),
        epsilon=float(epsilon),
        u_depth=int(u_depth),
        measured_u=tuple(measured),
        tail=tuple((n, float(log_z[(n, best_s)])) for n in range(1, tail_depth + 1)),
    )
    logger.info("profile: n0=%d lambda0=%.4f K=%.2f theta1=%.4f", n0, lambda0, chosen_k, best_theta)
    return profile


# ---------------------------------------------------------------------------
# Anchor plaques
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True, eq=False)
class AnchorPair:
    """Two depth-n subcylinders, one per side, whose images are ε-close plaques of one rectangle."""

    rect: int
    sub: tuple[int, int]
    frames: tuple[PlaqueFrame, PlaqueFrame]
    distance: float


@dataclass(frozen=True, slots=True, eq=False)
class AnchorSelection:
    n: int
    tables: tuple[CylinderTable, CylinderTable]
    pairs: tuple[AnchorPair, ...]


def _image_frames(
    sys: SkewSystem,
    P: MarkovPartition,
    frame: PlaqueFrame,
    table: CylinderTable,
    n: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Images (marked at plaque centres) and their chart heights."""
    mid = table.midpoints()
    image = advance(sys, SkewState.from_points(frame.points(sys, P, mid)), n).points
    heights = np.empty(len(table))
    for r in np.unique(table.end):
        sel = table.end == r
        heights[sel] = eigen_coords(P.auto, P.centres[r], image[sel, :2])[:, 1]
    return image, heights


def _cs_displacement(sys: SkewSystem, P: MarkovPartition, f1: PlaqueFrame, f2: PlaqueFrame) -> float:
    """max over the plaque of the distance between w and its center-stable partner."""
    b = np.linspace(0.0, float(P.lu[f1.end]), _VERIFY_POINTS)
    th1 = leaf_fiber(sys, f1.marked, b - f1.position)
    th2 = leaf_fiber(sys, f2.marked, b - f2.position)
    dth = shortest_lift(th1 - th2)
    ds = f1.height - f2.height
    return float(np.max(np.sqrt(ds * ds + dth * dth)))


def _anchor_search(
    sys: SkewSystem,
    P: MarkovPartition,
    frames: tuple[PlaqueFrame, PlaqueFrame],
    epsilon: float,
    *,
    budget: int,
    max_pairs: int,
    min_depth: int = 1,
) -> AnchorSelection:
    for n in range(min_depth, budget + 1):
        tables = (cylinder_table(P, frames[0].end, n), cylinder_table(P, frames[1].end, n))
        images = [_image_frames(sys, P, frames[k], tables[k], n) for k in (0, 1)]
        candidates: list[tuple[float, int, int]] = []
        for r in np.intersect1d(tables[0].end, tables[1].end):
            i1 = np.flatnonzero(tables[0].end == r)
            i2 = np.flatnonzero(tables[1].end == r)
            lift = float(P.ls[r])
            # heights shifted positive; only the fiber axis is periodic in effect
            pts2 = np.column_stack([images[1][1][i2] + lift, wrap(images[1][0][i2, 2])])
            pts1 = np.column_stack([images[0][1][i1] + lift, wrap(images[0][0][i1, 2])])
            tree = cKDTree(pts2, boxsize=[4.0 * lift + 1.0, 1.0])
            dist, nearest = tree.query(pts1, k=1, distance_upper_bound=epsilon)
            for a, d, b in zip(i1, dist, nearest):
                if np.isfinite(d):
                    candidates.append((float(d), int(a), int(i2[b])))
        if not candidates:
            continue
        candidates.sort()
        used1: set[int] = set()
        used2: set[int] = set()
        pairs: list[AnchorPair] = []
        for _, a, b in candidates:
            if a in used1 or b in used2:
                continue
            r = int(tables[0].end[a])
            half = 0.5 * float(P.lu[r])
            f1 = PlaqueFrame(end=r, height=float(images[0][1][a]), position=half, marked=images[0][0][a])
            f2 = PlaqueFrame(end=r, height=float(images[1][1][b]), position=half, marked=images[1][0][b])
            disp = _cs_displacement(sys, P, f1, f2)
            if disp > epsilon:
                continue
            used1.add(a)
            used2.add(b)
            pairs.append(AnchorPair(rect=r, sub=(a, b), frames=(f1, f2), distance=disp))
            if len(pairs) >= max_pairs:
                break
        if pairs:
            return AnchorSelection(n=n, tables=tables, pairs=tuple(pairs))
    raise ValueError(f"u-minimality budget: no ε-close plaques within {budget} iterates (ε={epsilon:g})")


def select_anchor_plaques(
    sys: SkewSystem,
    P: MarkovPartition,
    Y1: ReferenceMeasure,
    Y2: ReferenceMeasure,
    profile: ContractionProfile,
    *,
    budget: int = 12,
    max_pairs: int = 1,
) -> AnchorSelection:
    """First iterate at which both leaves contain full plaques of one rectangle within ε in the cs-distance."""
    return _anchor_search(
        sys,
        P,
        (frame_of(P, Y1), frame_of(P, Y2)),
        profile.epsilon,
        budget=budget,
        max_pairs=max_pairs,
    )


# ---------------------------------------------------------------------------
# The coupling recursion
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True, eq=False)
class _Side:
    """A node's plaque on one side: Y coordinate a = offset + scale·b, heights [t_lo, t_hi]."""

    offset: float
    scale: float
    frame: PlaqueFrame
    t_lo: float
    t_hi: float
    density: float

    def mass(self) -> float:
        return self.density * (self.t_hi - self.t_lo)


@dataclass(frozen=True, slots=True)
class _Piece:
    sub: int
    t_lo: float
    t_hi: float
    line_lo: float
    line_hi: float


@dataclass(eq=False)
class _Node:
    time: int
    sides: tuple[_Side, _Side]
    root: bool = False
    resolved: bool = False
    terminal: bool = False
    selection: AnchorSelection | None = None
    tbar: list[tuple[float, float]] = field(default_factory=list)
    masses: list[tuple[float, float]] = field(default_factory=list)
    leftovers: tuple[list[_Piece], list[_Piece]] = field(default_factory=lambda: ([], []))
    children: dict[Any, _Node] = field(default_factory=dict)
    violation: dict[tuple[int, tuple[int, ...]], float] = field(default_factory=dict)


@dataclass(frozen=True, slots=True)
class CouplingRecord:
    pair_id: int
    R: int
    matched: bool
    first_stage: bool
    start: tuple[float, float]
    partner: tuple[float, float]
    shadow_distances: tuple[float, ...] = ()
    same_component: bool = True

    @property
    def final_distance(self) -> float:
        return self.shadow_distances[-1] if self.shadow_distances else math.nan


@dataclass(frozen=True, slots=True, eq=False)
class CouplingRun:
    records: tuple[CouplingRecord, ...]
    side2_matched: np.ndarray
    side2_samples: np.ndarray
    stage: pd.DataFrame
    root_anchor_fraction: float
    first_stage_fraction: float
    nodes: int

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                {
                    "pair_id": r.pair_id,
                    "R": r.R if r.matched else -1,
                    "matched": int(r.matched),
                    "first_stage": int(r.first_stage),
                    "final_distance": r.final_distance,
                }
                for r in self.records
            ]
        )


class CouplingSimulator:
    """
    Particle-wise coupling of (Y1, m1) and (Y2, m2), Y = plaque × [0, 1].

    Nodes pair two full plaques (with height intervals) of equal mass. At a
    node both sides are iterated until ε-close anchor plaques appear; the
    anchored pieces split into the matched set and the stopping sets by the
    first depth at which the cylinder product of ‖Df|E^cs‖ exceeds K e^{λm};
    all remaining mass is paired along a mass line and recursed.
    """

    def __init__(
        self,
        sys: SkewSystem,
        P: MarkovPartition,
        Y1: ReferenceMeasure,
        Y2: ReferenceMeasure,
        profile: ContractionProfile,
        *,
        horizon: int = 200,
        budget: int = 12,
        max_pairs: int = 8,
        n_points: int = DEFAULT_CYLINDER_POINTS,
    ) -> None:
        self.sys = sys
        self.P = P
        self.Y = (Y1, Y2)
        self.profile = profile
        self.horizon = int(horizon)
        self.budget = int(budget)
        self.max_pairs = int(max_pairs)
        self.n_points = int(n_points)
        self._func, self._lip = log_cs_norm(sys)
        self.n_nodes = 1
        self.root = _Node(
            time=0,
            sides=(
                _Side(0.0, 1.0, frame_of(P, Y1), 0.0, 1.0, 1.0),
                _Side(0.0, 1.0, frame_of(P, Y2), 0.0, 1.0, 1.0),
            ),
            root=True,
        )

    # -- node construction -------------------------------------------------

    def _advance_frame(self, side: _Side, off: float, sc: float, end: int, steps: int) -> PlaqueFrame:
        P = self.P
        half = 0.5 * float(P.lu[end])
        b = off + sc * half
        point = side.frame.points(self.sys, P, np.array([b]))
        image = advance(self.sys, SkewState.from_points(point), steps).points[0]
        height = float(eigen_coords(P.auto, P.centres[end], image[:2])[1])
        return PlaqueFrame(end=end, height=height, position=half, marked=image)

    def _make_side(self, side: _Side, off: float, sc: float, end: int, steps: int, t_lo: float, t_hi: float) -> _Side:
        """Side for the subcylinder b = off + sc·b' of `side`'s plaque, `steps` iterates later."""
        P = self.P
        lu_old = float(P.lu[side.frame.end])
        lu_new = float(P.lu[end])
        return _Side(
            offset=side.offset + side.scale * off,
            scale=side.scale * sc,
            frame=self._advance_frame(side, off, sc, end, steps),
            t_lo=t_lo,
            t_hi=t_hi,
            density=side.density * abs(sc) * lu_new / lu_old,
        )

    def _resolve(self, node: _Node) -> None:
        if node.resolved:
            return
        node.resolved = True
        remaining = self.horizon - node.time
        if remaining < 1:
            node.terminal = True
            return
        frames = (node.sides[0].frame, node.sides[1].frame)
        try:
            sel = _anchor_search(
                self.sys,
                self.P,
                frames,
                self.profile.epsilon,
                budget=min(self.budget, remaining),
                max_pairs=self.max_pairs,
            )
        except ValueError as exc:
            logger.debug("node at time %d left unmatched: %s", node.time, exc)
            node.terminal = True
            return
        node.selection = sel
        P = self.P

        anchored: list[dict[int, int]] = [{}, {}]
        for p, pair in enumerate(sel.pairs):
            cm = []
            for k in (0, 1):
                side = node.sides[k]
                table = sel.tables[k]
                sub = pair.sub[k]
                rel = abs(float(table.scale[sub])) * float(P.lu[table.end[sub]]) / float(P.lu[side.frame.end])
                cm.append(side.density * rel)
                anchored[k][sub] = p
            h = (node.sides[0].t_hi - node.sides[0].t_lo, node.sides[1].t_hi - node.sides[1].t_lo)
            matched_mass = min(cm[0] * h[0], cm[1] * h[1])
            node.tbar.append((matched_mass / cm[0], matched_mass / cm[1]))
            node.masses.append((cm[0], cm[1]))

        for k in (0, 1):
            side = node.sides[k]
            table = sel.tables[k]
            pieces: list[_Piece] = []
            line = 0.0
            for sub in range(len(table)):
                rel = abs(float(table.scale[sub])) * float(P.lu[table.end[sub]]) / float(P.lu[side.frame.end])
                cm = side.density * rel
                t_lo = side.t_lo
                if sub in anchored[k]:
                    t_lo = side.t_lo + node.tbar[anchored[k][sub]][k]
                if side.t_hi - t_lo <= 1e-15:
                    continue
                width = cm * (side.t_hi - t_lo)
                pieces.append(_Piece(sub=sub, t_lo=t_lo, t_hi=side.t_hi, line_lo=line, line_hi=line + width))
                line += width
            node.leftovers[k].extend(pieces)

    def _violation(self, node: _Node, p: int, words: np.ndarray) -> np.ndarray:
        """First depth m (1..u_depth) whose side-1 cylinder product exceeds K e^{λm}; 0 when none."""
        pair = node.selection.pairs[p]
        frame = pair.frames[0]
        out = np.zeros(words.shape[0], dtype=int)
        pending = np.ones(words.shape[0], dtype=bool)
        for m in range(1, self.profile.u_depth + 1):
            if not np.any(pending):
                break
            prefixes = [tuple(int(v) for v in w[: m + 1]) for w in words]
            todo = sorted({prefixes[i] for i in np.flatnonzero(pending) if (p, prefixes[i]) not in node.violation})
            if todo:
                maps = [word_map(self.P, w) for w in todo]
                offs = np.array([mp[0] for mp in maps])
                scs = np.array([mp[1] for mp in maps])
                ends = np.array([w[-1] for w in todo])
                sums = cylinder_sums(self.sys, self.P, frame, offs, scs, ends, m, self._func, self._lip, n_points=self.n_points)
                for w, s in zip(todo, sums):
                    node.violation[(p, w)] = float(s)
            limit = float(self.profile.threshold(m))
            for i in np.flatnonzero(pending):
                if node.violation[(p, prefixes[i])] > limit:
                    out[i] = m
                    pending[i] = False
        return out

    def _child(self, node: _Node, key: Any, build: Callable[[], _Node]) -> _Node:
        child = node.children.get(key)
        if child is None:
            child = build()
            node.children[key] = child
            self.n_nodes += 1
        return child

    # -- routing -------------------------------------------------------------

    def route(self, k: int, a: np.ndarray, t: np.ndarray) -> dict[str, np.ndarray]:
        """
        Route side-k particles (a, t) through the node tree.

        Returns R (−1 when unmatched), first-stage flags and, for side 0, the
        partner coordinates (a2, t2).
        """
        n = a.shape[0]
        R = np.full(n, -1, dtype=int)
        first = np.zeros(n, dtype=bool)
        in_anchor_root = np.zeros(n, dtype=bool)
        partner = np.full((n, 2), np.nan)
        queue: list[tuple[_Node, np.ndarray]] = [(self.root, np.arange(n))]
        P = self.P
        while queue:
            node, idx = queue.pop()
            self._resolve(node)
            if node.terminal or node.selection is None:
                continue
            sel = node.selection
            side = node.sides[k]
            table = sel.tables[k]
            b = (a[idx] - side.offset) / side.scale
            sub = table.find(b)
            local = (b - table.offset[sub]) / table.scale[sub]
            anchored_pair = {pair.sub[k]: p for p, pair in enumerate(sel.pairs)}
            pair_of = np.array([anchored_pair.get(int(s), -1) for s in sub])
            tb = np.array([node.tbar[p][k] if p >= 0 else 0.0 for p in pair_of])
            in_match = (pair_of >= 0) & (t[idx] < side.t_lo + tb)
            if node.root:
                in_anchor_root[idx[in_match]] = True

            for p in np.unique(pair_of[in_match]):
                sel_p = in_match & (pair_of == p)
                ids = idx[sel_p]
                pair = sel.pairs[p]
                words, _, _, _ = itinerary(P, pair.rect, local[sel_p], self.profile.u_depth)
                depth = self._violation(node, int(p), words)
                ok = depth == 0
                R[ids[ok]] = node.time + sel.n
                if node.root:
                    first[ids[ok]] = True
                if k == 0 and np.any(ok):
                    other = node.sides[1]
                    t2_table = sel.tables[1]
                    s2 = pair.sub[1]
                    b2 = t2_table.offset[s2] + t2_table.scale[s2] * local[sel_p][ok]
                    partner[ids[ok], 0] = other.offset + other.scale * b2
                    cm1, cm2 = node.masses[p]
                    partner[ids[ok], 1] = other.t_lo + (cm1 / cm2) * (t[ids[ok]] - side.t_lo)
                for m in np.unique(depth[~ok]):
                    grp = ~ok & (depth == m)
                    for w in {tuple(int(v) for v in row[: m + 1]) for row in words[grp]}:
                        members = grp & np.all(words[:, : m + 1] == np.asarray(w), axis=1)
                        key = ("stop", int(p), w)
                        child = self._child(node, key, lambda p=int(p), w=w, m=int(m): self._stop_child(node, p, w, m))
                        queue.append((child, ids[members]))

            rest = ~in_match
            pieces = node.leftovers[k]
            others = node.leftovers[1 - k]
            if not np.any(rest) or not pieces or not others:
                continue
            by_sub = {pc.sub: j for j, pc in enumerate(pieces)}
            j_own = np.array([by_sub.get(int(s), -1) for s in sub[rest]])
            ids = idx[rest]
            known = j_own >= 0
            ids, j_own = ids[known], j_own[known]
            line_lo = np.array([pc.line_lo for pc in pieces])
            line_hi = np.array([pc.line_hi for pc in pieces])
            piece_lo = np.array([pc.t_lo for pc in pieces])
            piece_hi = np.array([pc.t_hi for pc in pieces])
            cm = (line_hi - line_lo) / (piece_hi - piece_lo)
            xi = line_lo[j_own] + cm[j_own] * (t[ids] - piece_lo[j_own])
            other_hi = np.array([o.line_hi for o in others])
            j_other = np.minimum(np.searchsorted(other_hi, xi, side="right"), len(others) - 1)
            for j, jo in {(int(a_), int(b_)) for a_, b_ in zip(j_own, j_other)}:
                members = (j_own == j) & (j_other == jo)
                key = ("left", j, jo) if k == 0 else ("left", jo, j)
                child = self._child(node, key, lambda key=key: self._left_child(node, key[1], key[2]))
                queue.append((child, ids[members]))
        return {"R": R, "first": first, "partner": partner, "anchor_root": in_anchor_root}

    def _stop_child(self, node: _Node, p: int, word: tuple[int, ...], m: int) -> _Node:
        sel = node.selection
        pair = sel.pairs[p]
        w_off, w_sc = word_map(self.P, word)
        sides = []
        for k in (0, 1):
            side = node.sides[k]
            table = sel.tables[k]
            sub = pair.sub[k]
            off = float(table.offset[sub]) + float(table.scale[sub]) * w_off
            sc = float(table.scale[sub]) * w_sc
            sides.append(
                self._make_side(side, off, sc, word[-1], sel.n + m, side.t_lo, side.t_lo + node.tbar[p][k])
            )
        return _Node(time=node.time + sel.n + m, sides=(sides[0], sides[1]))

    def _left_child(self, node: _Node, j1: int, j2: int) -> _Node:
        sel = node.selection
        pcs = (node.leftovers[0][j1], node.leftovers[1][j2])
        lo = max(pcs[0].line_lo, pcs[1].line_lo)
        hi = min(pcs[0].line_hi, pcs[1].line_hi)
        sides = []
        for k in (0, 1):
            pc = pcs[k]
            side = node.sides[k]
            table = sel.tables[k]
            cm = (pc.line_hi - pc.line_lo) / (pc.t_hi - pc.t_lo)
            t_lo = pc.t_lo + (lo - pc.line_lo) / cm
            t_hi = pc.t_lo + (hi - pc.line_lo) / cm
            sides.append(
                self._make_side(
                    side,
                    float(table.offset[pc.sub]),
                    float(table.scale[pc.sub]),
                    int(table.end[pc.sub]),
                    sel.n,
                    t_lo,
                    max(t_hi, t_lo),
                )
            )
        return _Node(time=node.time + sel.n, sides=(sides[0], sides[1]))

    # -- root stage bookkeeping ---------------------------------------------

    def stage_table(self) -> pd.DataFrame:
        """
        Exact masses of the root node's stopping sets P^n and matched set P^∞
        on side 1, per anchor pair.
        """
        self._resolve(self.root)
        node = self.root
        if node.selection is None:
            raise ValueError("u-minimality budget: the root node found no anchor plaques")
        rows: list[dict[str, Any]] = []
        for p, pair in enumerate(node.selection.pairs):
            cm1 = node.masses[p][0]
            b = cm1 * node.tbar[p][0]
            _, first, never = u_mass(
                self.sys, self.P, pair.frames[0], self.profile.K, self.profile.lam, self.profile.u_depth, n_points=self.n_points
            )
            for m, mass in sorted(first.items()):
                n = node.selection.n + m
                bound = b * math.exp(self.profile.lam * self.profile.s1 * (n - node.selection.n))
                rows.append({"pair": p, "n": n, "set": "P^n", "mass": b * mass, "bound": bound, "b": b})
            rows.append({"pair": p, "n": -1, "set": "P^inf", "mass": b * never, "bound": math.nan, "b": b})
        return pd.DataFrame(rows)


def run_coupling(
    sys: SkewSystem,
    P: MarkovPartition,
    Y1: ReferenceMeasure,
    Y2: ReferenceMeasure,
    profile: ContractionProfile,
    n_pairs: int,
    horizon: int,
    rng: np.random.Generator,
    *,
    budget: int = 12,
    max_pairs: int = 8,
    shadow_length: int = 20,
    n_points: int = DEFAULT_CYLINDER_POINTS,
) -> CouplingRun:
    sim = CouplingSimulator(sys, P, Y1, Y2, profile, horizon=horizon, budget=budget, max_pairs=max_pairs, n_points=n_points)

    a1 = rng.uniform(0.0, Y1.length, n_pairs)
    t1 = rng.random(n_pairs)
    side1 = sim.route(0, a1, t1)

    a2 = rng.uniform(0.0, Y2.length, n_pairs)
    t2 = rng.random(n_pairs)
    side2 = sim.route(1, a2, t2)

    matched = side1["R"] >= 0
    shadows: dict[int, tuple[tuple[float, ...], bool]] = {}
    if np.any(matched) and shadow_length > 0:
        ids = np.flatnonzero(matched)
        shadows = _shadow(sys, P, Y1, Y2, a1[ids], side1["partner"][ids, 0], side1["R"][ids], shadow_length, ids)

    records = []
    for i in range(n_pairs):
        dist, same = shadows.get(i, ((), True))
        records.append(
            CouplingRecord(
                pair_id=i,
                R=int(side1["R"][i]),
                matched=bool(matched[i]),
                first_stage=bool(side1["first"][i]),
                start=(float(a1[i]), float(t1[i])),
                partner=(float(side1["partner"][i, 0]), float(side1["partner"][i, 1])),
                shadow_distances=dist,
                same_component=same,
            )
        )

    anchor_root = side1["anchor_root"]
    root_fraction = float(np.mean(side1["first"][anchor_root])) if np.any(anchor_root) else math.nan
    run = CouplingRun(
        records=tuple(records),
        side2_matched=side2["R"] >= 0,
        side2_samples=np.column_stack([a2, t2]),
        stage=sim.stage_table(),
        root_anchor_fraction=root_fraction,
        first_stage_fraction=float(np.mean(side1["first"])),
        nodes=sim.n_nodes,
    )
    logger.info("coupling: %d/%d matched over %d nodes", int(matched.sum()), n_pairs, sim.n_nodes)
    return run


def _shadow(
    sys: SkewSystem,
    P: MarkovPartition,
    Y1: ReferenceMeasure,
    Y2: ReferenceMeasure,
    a1: np.ndarray,
    a2: np.ndarray,
    R: np.ndarray,
    length: int,
    ids: np.ndarray,
) -> dict[int, tuple[tuple[float, ...], bool]]:
    """d(f^n x, f^n y) for n in [R, R + length) and same-rectangle flags."""
    x = SkewState.from_points(points_at(sys, P, Y1, a1))
    y = SkewState.from_points(points_at(sys, P, Y2, a2))
    dist = np.full((a1.shape[0], length), np.nan)
    same = np.ones(a1.shape[0], dtype=bool)
    for n in range(int(R.max()) + length):
        j = n - R
        rec = (j >= 0) & (j < length)
        if np.any(rec):
            px = x.points[rec]
            py = y.points[rec]
            dist[rec, j[rec]] = np.linalg.norm(shortest_lift(px - py), axis=1)
            ix, inx, _ = locate_with_chart(P, px[:, :2])
            iy, iny, _ = locate_with_chart(P, py[:, :2])
            clash = (ix != iy) & inx & iny
            same[np.flatnonzero(rec)[clash]] = False
        x = step(sys, x)
        y = step(sys, y)
    return {int(i): (tuple(float(v) for v in dist[k]), bool(same[k])) for k, i in enumerate(ids)}


# ---------------------------------------------------------------------------
# Fits and checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class TailFit:
    C: float
    rho: float
    r2: float
    n_points: int

    def to_dict(self) -> dict[str, Any]:
        return {"C": self.C, "rho": self.rho, "r2": self.r2, "n_points": self.n_points}


def _records_R(records: Sequence[CouplingRecord] | np.ndarray) -> np.ndarray:
    if isinstance(records, np.ndarray):
        return records.astype(float)
    return np.array([r.R if r.matched else np.inf for r in records], dtype=float)


def tail_fit(records: Sequence[CouplingRecord] | np.ndarray, *, min_records: int = 1000, min_survivors: int = 20) -> TailFit:
    """Log-linear fit of the empirical survival function P(R > n)."""
    R = _records_R(records)
    finite = np.isfinite(R)
    if int(finite.sum()) < min_records:
        raise ValueError(f"insufficient records: {int(finite.sum())} matched < {min_records}")
    n_total = R.shape[0]
    grid = np.arange(int(R[finite].min()), int(R[finite].max()) + 1)
    survivors = np.array([np.sum(R > n) for n in grid])
    keep = survivors >= min_survivors
    if int(keep.sum()) < 2:
        raise ValueError("insufficient records: survival function too short to fit")
    fit = log_linear_fit(grid[keep], survivors[keep] / n_total, base=math.e)
    return TailFit(C=fit.prefactor, rho=fit.rate, r2=fit.r2, n_points=fit.n_points)


def shadow_fit(records: Sequence[CouplingRecord], *, min_records: int = 10) -> TailFit:
    """Log-linear fit of the median shadow distance against n − R."""
    rows = [r.shadow_distances for r in records if r.matched and r.shadow_distances]
    if len(rows) < min_records:
        raise ValueError(f"insufficient records: {len(rows)} matched records with shadows")
    dist = np.array(rows)
    med = np.nanmedian(dist, axis=0)
    j = np.arange(med.shape[0])
    keep = np.isfinite(med) & (med > 1e-14)
    fit: LogLinearFit = log_linear_fit(j[keep], med[keep], base=math.e)
    return TailFit(C=fit.prefactor, rho=fit.rate, r2=fit.r2, n_points=fit.n_points)


def envelope_fraction(records: Sequence[CouplingRecord], profile: ContractionProfile) -> float:
    """Share of matched records with d(f^n x, f^n y) <= K ε e^{λ(n−R)/2} at every recorded n."""
    rows = [r.shadow_distances for r in records if r.matched and r.shadow_distances]
    if not rows:
        return math.nan
    dist = np.array(rows)
    j = np.arange(dist.shape[1])
    env = profile.K * profile.epsilon * np.exp(profile.lam * j / 2.0)
    return float(np.mean(np.all(dist <= env[None, :] + 1e-12, axis=1)))


def tau_statistic(run: CouplingRun, Y1: ReferenceMeasure, Y2: ReferenceMeasure) -> float:
    """2D KS between τ-images of matched side-1 particles and matched side-2 samples."""
    part = np.array([r.partner for r in run.records if r.matched])
    direct = run.side2_samples[run.side2_matched]
    if part.shape[0] == 0 or direct.shape[0] == 0:
        raise ValueError("insufficient records: no matched particles on one side")
    scale = np.array([1.0 / Y2.length, 1.0])
    return ks_2d(part * scale, direct * scale)
