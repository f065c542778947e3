# src/skewlab/hitting.py
from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np
import pandas as pd

from .estimators import (
    bootstrap_stderr,
    circular_clusters,
    ks_2d,
    log_linear_fit,
    weighted_mean,
)
from .gibbs import EmpiricalMeasure
from .partition import MarkovPartition, cylinder_count, cylinder_table, itinerary, locate_with_chart
from .reference import ReferenceMeasure, points_at
from .system import (
    CrossSection,
    LeafSegment,
    SkewState,
    SkewSystem,
    advance,
    leaf_fiber,
    leaf_segment,
    section_hit,
)
from .torus import eigen_coords

logger = logging.getLogger(__name__)

Observable = Callable[[np.ndarray], np.ndarray]

STATUS_OK = "ok"
STATUS_CONVERGED = "already converged"
STATUS_INSUFFICIENT = "insufficient depths"
MIN_FIT_POINTS: int = 5
EXACT_NOISE_FLOOR: float = 1e-9


@dataclass(frozen=True, slots=True, eq=False)
class HitSet:
    """Section hits of f^n(ξ^u_i(x)) with S, one per image plaque."""

    n: int
    points: np.ndarray
    values: np.ndarray

    def __len__(self) -> int:
        return int(self.points.shape[0])

    @property
    def average(self) -> float:
        if len(self) == 0:
            raise ValueError(f"below first-hit depth: no plaques reach the section at n={self.n}")
        return float(np.mean(self.values))


def _image_leaves(
    P: MarkovPartition,
    j: int,
    image: np.ndarray,
    position: np.ndarray,
) -> LeafSegment:
    """Plaques of rectangle j marked by known image points at known plaque coordinates."""
    centre = P.centres[j]
    chart = eigen_coords(P.auto, centre, image[:, :2])
    lu = np.full(position.shape, float(P.lu[j]))
    return LeafSegment(
        index=np.full(position.shape, j, dtype=int),
        height=chart[:, 1],
        position=position,
        marked=image,
        length=lu,
    )


def _push_coords(
    sys: SkewSystem,
    P: MarkovPartition,
    start: ReferenceMeasure,
    coords: np.ndarray,
    n: int,
) -> np.ndarray:
    state = SkewState.from_points(points_at(sys, P, start, coords))
    return advance(sys, state, n).points


def hit_exact(
    sys: SkewSystem,
    P: MarkovPartition,
    start: ReferenceMeasure,
    S: CrossSection,
    n: int,
    phi: Observable,
) -> HitSet:
    """Enumerate the depth-n cylinders from the start plaque that end in S's rectangle."""
    table = cylinder_table(P, start.index, n, end=S.index)
    if len(table) == 0:
        return HitSet(n=int(n), points=np.empty((0, 3)), values=np.empty(0))
    mid = table.midpoints()
    image = _push_coords(sys, P, start, mid, n)
    position = (mid - table.offset) / table.scale
    leaves = _image_leaves(P, S.index, image, position)
    q = section_hit(sys, P, S, leaves)
    return HitSet(n=int(n), points=q, values=np.asarray(phi(q), dtype=float))


@dataclass(frozen=True, slots=True)
class MonteCarloHit:
    n: int
    average: float
    stderr: float
    landed: int
    n_samples: int


def hit_mc(
    sys: SkewSystem,
    P: MarkovPartition,
    start: ReferenceMeasure,
    S: CrossSection,
    n: int,
    n_samples: int,
    rng: np.random.Generator,
    phi: Observable,
    *,
    n_boot: int = 200,
) -> MonteCarloHit:
    """
    Sample the start plaque, keep orbits whose depth-n symbol is S's
    rectangle, and average φ over their plaques' section hits.

    Every landing plaque carries the same reference mass, so landings are
    uniform over plaques.
    """
    a = rng.uniform(0.0, start.length, n_samples)
    words, off, sc, _ = itinerary(P, start.index, a, n)
    landed = words[:, -1] == S.index
    count = int(landed.sum())
    if count == 0:
        raise ValueError(f"below first-hit depth: no samples reached rectangle {S.index} at n={n}")
    a_hit = a[landed]
    image = _push_coords(sys, P, start, a_hit, n)
    position = (a_hit - off[landed]) / sc[landed]
    leaves = _image_leaves(P, S.index, image, position)
    q = section_hit(sys, P, S, leaves)
    values = np.asarray(phi(q), dtype=float)
    return MonteCarloHit(
        n=int(n),
        average=float(np.mean(values)),
        stderr=bootstrap_stderr(values, rng, n_boot=n_boot),
        landed=count,
        n_samples=int(n_samples),
    )


def first_hit_depth(P: MarkovPartition, i: int, j: int) -> int:
    for n in range(P.cylinder_cap + 1):
        if cylinder_count(P, i, n, end=j) > 0:
            return n
    raise ValueError(f"rectangle {j} is not reached from {i} within the cylinder cap")


# ---------------------------------------------------------------------------
# Series and rate fits
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class RateFit:
    slope: float
    intercept: float
    r2: float
    n_points: int
    status: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "r2": self.r2,
            "n_points": self.n_points,
            "status": self.status,
        }


@dataclass(frozen=True, slots=True, eq=False)
class HittingSeries:
    n_values: np.ndarray
    averages: np.ndarray
    stderr: np.ndarray
    counts: np.ndarray
    method: tuple[str, ...]
    limit_estimate: float = math.nan
    rate_fit: RateFit | None = None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "n": self.n_values.astype(int),
                "method": list(self.method),
                "count": self.counts.astype(int),
                "average": self.averages,
                "stderr": self.stderr,
            }
        )


def rate_fit(series: HittingSeries, limit: float, *, noise_factor: float = 3.0) -> RateFit:
    """log10|average_n − limit| against n over the depths above the noise floor."""
    diff = np.abs(series.averages - limit)
    floor = np.maximum(noise_factor * series.stderr, EXACT_NOISE_FLOOR)
    usable = diff > floor
    k = int(usable.sum())
    if k == 0:
        return RateFit(slope=0.0, intercept=0.0, r2=0.0, n_points=0, status=STATUS_CONVERGED)
    if k < MIN_FIT_POINTS:
        return RateFit(slope=0.0, intercept=0.0, r2=0.0, n_points=k, status=STATUS_INSUFFICIENT)
    fit = log_linear_fit(series.n_values[usable], diff[usable])
    return RateFit(slope=fit.slope, intercept=fit.intercept, r2=fit.r2, n_points=k, status=STATUS_OK)


def hitting_series(
    sys: SkewSystem,
    P: MarkovPartition,
    start: ReferenceMeasure,
    S: CrossSection,
    phi: Observable,
    rng: np.random.Generator,
    *,
    exact_n: Sequence[int] = (),
    mc_n: Sequence[int] = (),
    n_samples: int = 10_000,
) -> HittingSeries:
    rows: list[tuple[int, float, float, int, str]] = []
    for n in exact_n:
        hits = hit_exact(sys, P, start, S, n, phi)
        if len(hits) == 0:
            continue
        rows.append((n, hits.average, 0.0, len(hits), "exact"))
    for n in mc_n:
        try:
            mc = hit_mc(sys, P, start, S, n, n_samples, rng, phi)
        except ValueError:
            logger.debug("no Monte Carlo landings at n=%d", n)
            continue
        rows.append((n, mc.average, mc.stderr, mc.landed, "monte-carlo"))
    if not rows:
        raise ValueError("below first-hit depth: no depth of the series reaches the section")
    return HittingSeries(
        n_values=np.array([r[0] for r in rows], dtype=float),
        averages=np.array([r[1] for r in rows]),
        stderr=np.array([r[2] for r in rows]),
        counts=np.array([r[3] for r in rows], dtype=float),
        method=tuple(r[4] for r in rows),
    )


def with_fit(series: HittingSeries, limit: float) -> HittingSeries:
    return HittingSeries(
        n_values=series.n_values,
        averages=series.averages,
        stderr=series.stderr,
        counts=series.counts,
        method=series.method,
        limit_estimate=float(limit),
        rate_fit=rate_fit(series, limit),
    )


# ---------------------------------------------------------------------------
# Transverse measures
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True, eq=False)
class TransverseEstimate:
    """
    Projection of μ|ℳ_i to S along unstable plaques.

    `coords` holds (chart height s, fiber θ) on the section; `weights` are the
    unnormalised particle weights, so their sum estimates μ(ℳ_i).
    """

    section: CrossSection
    points: np.ndarray
    coords: np.ndarray
    weights: np.ndarray
    scale: float
    total_mass: float
    mass_stderr: float

    def __len__(self) -> int:
        return int(self.points.shape[0])


def estimate_transverse(
    sys: SkewSystem,
    P: MarkovPartition,
    m: EmpiricalMeasure,
    S: CrossSection,
) -> TransverseEstimate:
    if not (0 <= S.index < P.k):
        raise ValueError(f"section lies outside the partition (index {S.index})")
    leaves = leaf_segment(sys, P, m.points, strict=False)
    inside = leaves.index == S.index
    if not np.any(inside):
        raise ValueError(f"no particles of the measure lie in rectangle {S.index}")
    q = section_hit(sys, P, S, leaves.take(inside))
    w = m.weights[inside]
    mass = float(w.sum())
    n = len(m)
    return TransverseEstimate(
        section=S,
        points=q,
        coords=np.column_stack([leaves.height[inside], q[:, 2]]),
        weights=w,
        scale=1.0 / float(P.lu[S.index]),
        total_mass=mass,
        mass_stderr=math.sqrt(max(mass * (1.0 - mass), 0.0) / n),
    )


def transverse_average(
    est: TransverseEstimate,
    phi: Observable,
    rng: np.random.Generator,
) -> tuple[float, float]:
    """(1/‖μ̂_S‖)∫φ dμ̂_S with a bootstrap standard error."""
    values = np.asarray(phi(est.points), dtype=float)
    return weighted_mean(values, est.weights), bootstrap_stderr(values, rng, weights=est.weights)


@dataclass(frozen=True, slots=True)
class HolonomyCheck:
    ks: float
    ratios: tuple[float, ...]
    ratio_spread: float
    mean_ratio: float
    displacement: float
    domain: tuple[float, float]
    n_pushed: int
    n_target: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "ks": self.ks,
            "ratios": list(self.ratios),
            "ratio_spread": self.ratio_spread,
            "mean_ratio": self.mean_ratio,
            "displacement": self.displacement,
            "domain": list(self.domain),
            "n_pushed": self.n_pushed,
            "n_target": self.n_target,
        }


def _section_frame(P: MarkovPartition, S: CrossSection) -> np.ndarray:
    """Eigencoordinates (u, s) of the section's centre lift."""
    return P.centres_eigen[S.index] + np.array([S.position - 0.5 * P.lu[S.index], 0.0])


def holonomy_translate(
    P: MarkovPartition,
    S1: CrossSection,
    S2: CrossSection,
    *,
    budget: float,
) -> tuple[float, float, tuple[float, float]]:
    """
    Leaf displacement t and height shift between two sections for the lattice
    translate giving the longest common domain with |t| <= budget.

    Returns (t, height shift, domain of heights on S1).
    """
    z1 = _section_frame(P, S1)
    z2 = _section_frame(P, S2)
    h1 = 0.5 * S1.length
    h2 = 0.5 * S2.length
    w = int(math.ceil(np.linalg.norm(P.auto.basis, 2) * (budget + h1 + h2 + 2.0))) + 1
    best: tuple[float, float, float, float, float] | None = None
    for m in range(-w, w + 1):
        for k in range(-w, w + 1):
            shift = P.auto.inverse_basis @ np.array([m, k], dtype=float)
            du = float(z2[0] + shift[0] - z1[0])
            ds = float(z1[1] - (z2[1] + shift[1]))
            if abs(du) > budget:
                continue
            lo = max(-h1, -h2 - ds)
            hi = min(h1, h2 - ds)
            if hi - lo <= 1e-12:
                continue
            if best is None or (hi - lo, -abs(du)) > (best[0], -abs(best[1])):
                best = (hi - lo, du, ds, lo, hi)
    if best is None:
        raise ValueError("empty common domain: no unstable leaf joins the two sections within the budget")
    _, du, ds, lo, hi = best
    return du, ds, (lo, hi)


def check_holonomy_invariance(
    sys: SkewSystem,
    P: MarkovPartition,
    est1: TransverseEstimate,
    est2: TransverseEstimate,
    *,
    budget: float = 2.0,
    n_bins: int = 4,
    fault: float = 1.0,
) -> HolonomyCheck:
    """
    Push c_i·μ̂_{S1} along unstable leaves to S2 and compare with c_j·μ̂_{S2}.

    `fault` multiplies c_i and exists to confirm a wrong scale is detected.
    """
    t, ds, (lo, hi) = holonomy_translate(P, est1.section, est2.section, budget=budget)
    in1 = (est1.coords[:, 0] >= lo) & (est1.coords[:, 0] <= hi)
    s_img = est1.coords[in1, 0] + ds
    theta_img = leaf_fiber(sys, est1.points[in1], t)
    lo2, hi2 = lo + ds, hi + ds
    in2 = (est2.coords[:, 0] >= lo2) & (est2.coords[:, 0] <= hi2)
    if not np.any(in1) or not np.any(in2):
        raise ValueError("empty common domain: no particles on the holonomy domain")

    pushed = np.column_stack([s_img, theta_img])
    target = est2.coords[in2]
    ks = ks_2d(pushed, target)

    c1 = est1.scale * fault
    c2 = est2.scale
    w1 = est1.weights[in1]
    w2 = est2.weights[in2]
    edges = np.linspace(lo2, hi2, n_bins + 1)
    m1, _ = np.histogram(s_img, bins=edges, weights=w1)
    m2, _ = np.histogram(target[:, 0], bins=edges, weights=w2)
    ok = (m1 > 0) & (m2 > 0)
    ratios = (c1 * m1[ok]) / (c2 * m2[ok])
    mean_ratio = float(c1 * w1.sum() / (c2 * w2.sum()))

    result = HolonomyCheck(
        ks=ks,
        ratios=tuple(float(r) for r in ratios),
        ratio_spread=float(np.ptp(ratios)) if ratios.size else math.inf,
        mean_ratio=mean_ratio,
        displacement=t,
        domain=(lo, hi),
        n_pushed=int(in1.sum()),
        n_target=int(in2.sum()),
    )
    logger.info("holonomy invariance: KS=%.4f mean ratio=%.4f", ks, mean_ratio)
    return result


# ---------------------------------------------------------------------------
# Center atoms
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class AtomProbe:
    count: int
    sizes: tuple[int, ...]
    centres: tuple[float, ...]
    total_width: float
    half_count: int
    n_particles: int
    diffuse: bool

    @property
    def status(self) -> str:
        return "no atomic structure" if self.diffuse else STATUS_OK

    def to_dict(self) -> dict[str, Any]:
        return {
            "count": self.count,
            "sizes": list(self.sizes),
            "centres": list(self.centres),
            "total_width": self.total_width,
            "half_count": self.half_count,
            "n_particles": self.n_particles,
            "diffuse": self.diffuse,
            "status": self.status,
        }


def center_atom_probe(
    sys: SkewSystem,
    P: MarkovPartition,
    m: EmpiricalMeasure,
    anchor: Any,
    *,
    slab: float = 0.02,
    eps: float = 1e-2,
    min_particles: int = 50,
) -> AtomProbe:
    """
    Cluster the center coordinates of particles in a thin slab around the
    center-stable plaque of `anchor`.

    Particles are slid along their unstable plaques onto the plaque; the
    fiber coordinate there is the center coordinate. The measure is flagged
    diffuse when clusters cover half the circle or their number grows when
    the particle count doubles.
    """
    a = np.asarray(anchor, dtype=float)
    idx, interior, chart = locate_with_chart(P, a[:2])
    if not interior[0]:
        raise ValueError("ambiguous plaque: probe anchor lies on a rectangle boundary")
    j = int(idx[0])
    leaves = leaf_segment(sys, P, m.points, strict=False)
    u_anchor = float(chart[0, 0]) + 0.5 * float(P.lu[j])
    near = (leaves.index == j) & (np.abs(leaves.position - u_anchor) < slab)
    count = int(near.sum())
    if count < min_particles:
        raise ValueError(f"too few particles in slab: {count} < {min_particles}")

    S = CrossSection(index=j, anchor=(float(a[0]), float(a[1])), position=u_anchor, length=float(P.ls[j]))
    theta = section_hit(sys, P, S, leaves.take(near))[:, 2]
    full = circular_clusters(theta, eps=eps)
    half = circular_clusters(theta[: count // 2], eps=eps)
    total_width = float(sum(c.width for c in full))
    diffuse = total_width >= 0.5 or (len(full) > 3 and len(full) > 1.5 * len(half))
    return AtomProbe(
        count=len(full),
        sizes=tuple(c.count for c in full),
        centres=tuple(c.centre for c in full),
        total_width=total_width,
        half_count=len(half),
        n_particles=count,
        diffuse=diffuse,
    )
