# src/skewlab/system.py
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy import stats

from .partition import MarkovPartition, chart_point, locate_with_chart, plaque_point
from .torus import (
    DEFAULT_MAX_ITERATE,
    ToralAutomorphism,
    apply_auto,
    apply_grid,
    eigen_data,
    eigen_coords,
    from_grid,
    to_grid,
    torus_distance,
    wrap,
)

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
DEFAULT_HOLONOMY_DEPTH: int = 40
DEFAULT_MAX_BACKWARD: int = 200
DEFAULT_INVERSE_TOL: float = 1e-13
DEFAULT_HOLONOMY_TOL: float = 1e-8

_BISECT_STEPS = 24
_NEWTON_STEPS = 50


@dataclass(frozen=True, slots=True)
class SkewSystem:
    """
    f(x, θ) = (Ax, g_x(θ)) on T² × S¹ with
    g_x(θ) = θ + alpha + delta·sin(2πx₁) − (kappa/2π)·sin(2πθ).

    Points are arrays whose last axis is (x₁, x₂, θ).
    """

    base: ToralAutomorphism
    kappa: float
    delta: float
    alpha: float
    holonomy_depth: int = DEFAULT_HOLONOMY_DEPTH
    max_backward: int = DEFAULT_MAX_BACKWARD
    max_iterate: int = DEFAULT_MAX_ITERATE
    inverse_tol: float = DEFAULT_INVERSE_TOL
    holonomy_tol: float = DEFAULT_HOLONOMY_TOL

    @property
    def lambda_u(self) -> float:
        return self.base.lambda_u

    @property
    def omega(self) -> float:
        return max(1.0 / self.lambda_u, (1.0 + self.kappa) / self.lambda_u)

    @property
    def contraction_ratio(self) -> float:
        """Geometric ratio of the holonomy truncation error per backward step."""
        return (1.0 + self.kappa) / self.lambda_u

    @property
    def leaf_lipschitz(self) -> float:
        """Lipschitz constant of leaf graphs with respect to arc length along e_u."""
        gap = self.lambda_u - 1.0 - self.kappa
        if gap <= 0:
            return math.inf
        return TWO_PI * self.delta * abs(self.base.e_u[0]) / gap

    def truncation_bound(self, displacement: Any, depth: int) -> np.ndarray:
        t = np.abs(np.asarray(displacement, dtype=float))
        return self.leaf_lipschitz * t * self.contraction_ratio**depth

    def to_dict(self) -> dict[str, Any]:
        return {
            "matrix": [list(r) for r in self.base.matrix],
            "kappa": self.kappa,
            "delta": self.delta,
            "alpha": self.alpha,
            "holonomy_depth": self.holonomy_depth,
            "max_backward": self.max_backward,
            "omega": self.omega,
        }


# ---------------------------------------------------------------------------
# Fiber maps
# ---------------------------------------------------------------------------


def fiber_lift(sys: SkewSystem, x1: Any, theta: Any) -> np.ndarray:
    th = np.asarray(theta, dtype=float)
    return (
        th
        + sys.alpha
        + sys.delta * np.sin(TWO_PI * np.asarray(x1, dtype=float))
        - (sys.kappa / TWO_PI) * np.sin(TWO_PI * th)
    )


def fiber_map(sys: SkewSystem, x1: Any, theta: Any) -> np.ndarray:
    return wrap(fiber_lift(sys, x1, theta))


def fiber_derivative(sys: SkewSystem, theta: Any) -> np.ndarray:
    """∂g/∂θ = 1 − kappa·cos(2πθ)."""
    return 1.0 - sys.kappa * np.cos(TWO_PI * np.asarray(theta, dtype=float))


def fiber_log_derivative(sys: SkewSystem, theta: Any) -> np.ndarray:
    return np.log(np.abs(fiber_derivative(sys, theta)))


def cs_norm(sys: SkewSystem, theta: Any) -> np.ndarray:
    """‖Df|E^cs‖ as the fiber derivative max'd with the stable-lift factor."""
    return np.maximum(np.abs(fiber_derivative(sys, theta)), sys.base.lambda_s)


def fiber_inverse(sys: SkewSystem, x1: Any, phi: Any) -> np.ndarray:
    """
    g_x^{-1}(φ) by bisection then Newton.

    θ − (kappa/2π)·sin(2πθ) is increasing and within kappa/2π of θ, so the
    root is bracketed by target ± kappa/2π.
    """
    if sys.kappa >= 1.0:
        raise ValueError("fiber not diffeo: kappa must be < 1")
    r = sys.kappa / TWO_PI
    target = (
        np.asarray(phi, dtype=float)
        - sys.alpha
        - sys.delta * np.sin(TWO_PI * np.asarray(x1, dtype=float))
    )
    lo = target - r
    hi = target + r
    for _ in range(_BISECT_STEPS):
        mid = 0.5 * (lo + hi)
        below = mid - r * np.sin(TWO_PI * mid) < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)

    theta = 0.5 * (lo + hi)
    for _ in range(_NEWTON_STEPS):
        residual = theta - r * np.sin(TWO_PI * theta) - target
        step = residual / (1.0 - sys.kappa * np.cos(TWO_PI * theta))
        theta = theta - step
        if np.all(np.abs(step) <= sys.inverse_tol):
            return wrap(theta)
    raise RuntimeError("fiber inverse did not converge")


# ---------------------------------------------------------------------------
# Iteration
# ---------------------------------------------------------------------------


def _as_points(p: Any) -> np.ndarray:
    arr = np.asarray(p, dtype=float)
    if arr.shape[-1] != 3:
        raise ValueError(f"skew points need (x1, x2, theta) on the last axis, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, slots=True, eq=False)
class SkewState:
    """
    Particles with their base coordinates held on the exact 2^-64 grid.

    Stepping the grid state one iterate at a time agrees bit for bit with
    applying the integer matrix power directly.
    """

    grid: np.ndarray
    theta: np.ndarray

    @classmethod
    def from_points(cls, p: Any) -> SkewState:
        arr = _as_points(p).reshape(-1, 3)
        return cls(grid=to_grid(arr[:, :2]), theta=wrap(arr[:, 2]))

    @property
    def base(self) -> np.ndarray:
        return from_grid(self.grid)

    @property
    def points(self) -> np.ndarray:
        return np.column_stack([self.base, self.theta])

    def __len__(self) -> int:
        return int(self.theta.shape[0])

    def take(self, sel: Any) -> SkewState:
        return SkewState(grid=self.grid[sel], theta=self.theta[sel])


def step(sys: SkewSystem, state: SkewState) -> SkewState:
    x1 = from_grid(state.grid[:, 0])
    return SkewState(grid=apply_grid(sys.base, state.grid, 1), theta=fiber_map(sys, x1, state.theta))


def step_back(sys: SkewSystem, state: SkewState) -> SkewState:
    grid = apply_grid(sys.base, state.grid, -1)
    return SkewState(grid=grid, theta=fiber_inverse(sys, from_grid(grid[:, 0]), state.theta))


def advance(sys: SkewSystem, state: SkewState, n: int) -> SkewState:
    if abs(n) > sys.max_iterate:
        raise ValueError(f"|n|={abs(n)} exceeds max_iterate={sys.max_iterate}")
    move = step if n >= 0 else step_back
    for _ in range(abs(n)):
        state = move(sys, state)
    return state


def apply(sys: SkewSystem, p: Any, n: int) -> np.ndarray:
    """f^n(p); the base coordinate equals apply_auto(A, x, n) exactly."""
    arr = _as_points(p)
    out = advance(sys, SkewState.from_points(arr), int(n)).points
    return out.reshape(arr.shape)


# ---------------------------------------------------------------------------
# Strong-unstable leaves
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class HolonomyValue:
    theta: np.ndarray
    error_bound: float


def leaf_fiber(
    sys: SkewSystem,
    p: Any,
    displacement: Any,
    depth: int | None = None,
) -> np.ndarray:
    """
    Fiber coordinate of the strong-unstable leaf through p at base p + t·e_u.

    The backward base orbit of the displaced point is written down from the
    exact orbit of p as x_{-k} + t·mu_u^{-k}·e_u, never by inverting A on it.
    Only the fiber gap to the orbit of p is iterated forward: composing the
    lifts directly would amplify rounding by (1+kappa)^depth near the
    fiber repeller.
    """
    n = sys.holonomy_depth if depth is None else int(depth)
    if n < 0:
        raise ValueError("holonomy depth must be >= 0")
    if n > sys.max_backward:
        raise ValueError(f"depth budget: holonomy depth {n} exceeds max_backward={sys.max_backward}")

    arr = _as_points(p)
    t = np.asarray(displacement, dtype=float)
    shape = np.broadcast_shapes(arr.shape[:-1], t.shape)
    pts = np.broadcast_to(arr, shape + (3,)).reshape(-1, 3)
    disp = np.broadcast_to(t, shape).reshape(-1)

    if sys.delta == 0.0:
        return wrap(pts[:, 2]).reshape(shape)

    state = SkewState.from_points(pts)
    x1_back = np.empty((n, disp.shape[0]))
    theta_back = np.empty((n, disp.shape[0]))
    for k in range(n):
        state = step_back(sys, state)
        x1_back[k] = from_grid(state.grid[:, 0])
        theta_back[k] = state.theta

    e_u1 = sys.base.e_u[0]
    r = sys.kappa / TWO_PI
    gap = np.zeros_like(disp)
    for k in range(n - 1, -1, -1):
        # the displaced base sits h further along x1 after k+1 backward steps
        h = disp * sys.base.mu_u ** (-(k + 1)) * e_u1
        gap = gap + sys.delta * _sin_step(x1_back[k], h) - r * _sin_step(theta_back[k], gap)
    return wrap(pts[:, 2] + gap).reshape(shape)


def _sin_step(a: np.ndarray, h: np.ndarray) -> np.ndarray:
    """sin(2π(a+h)) − sin(2πa), accurate relative to h."""
    return 2.0 * np.cos(TWO_PI * a + math.pi * h) * np.sin(math.pi * h)


def unstable_holonomy(
    sys: SkewSystem,
    p: Any,
    y: Any,
    depth: int | None = None,
    *,
    tol: float | None = None,
) -> HolonomyValue:
    """θ^u(y) on the leaf through p, with its a priori truncation bound."""
    n = sys.holonomy_depth if depth is None else int(depth)
    limit = sys.holonomy_tol if tol is None else float(tol)
    arr = _as_points(p)
    us = eigen_coords(sys.base, arr[..., :2], y)
    if np.any(np.abs(us[..., 1]) > 1e-8):
        raise ValueError("target base is not on the local unstable line of the leaf")
    bound = float(np.max(sys.truncation_bound(us[..., 0], n), initial=0.0))
    if bound > limit:
        raise ValueError(f"increase depth: truncation bound {bound:.3e} exceeds {limit:.3e} at depth {n}")
    return HolonomyValue(theta=leaf_fiber(sys, arr, us[..., 0], n), error_bound=bound)


@dataclass(frozen=True, slots=True, eq=False)
class LeafSegment:
    """
    Strong-unstable plaques, one per row.

    Each plaque lies in rectangle `index` at chart height `height` and is
    marked by a point on it at plaque coordinate `position`.
    """

    index: np.ndarray
    height: np.ndarray
    position: np.ndarray
    marked: np.ndarray
    length: np.ndarray

    def __len__(self) -> int:
        return int(self.index.shape[0])

    def take(self, sel: Any) -> LeafSegment:
        return LeafSegment(
            index=self.index[sel],
            height=self.height[sel],
            position=self.position[sel],
            marked=self.marked[sel],
            length=self.length[sel],
        )

    def truncation_error_bound(self, sys: SkewSystem, depth: int | None = None) -> float:
        n = sys.holonomy_depth if depth is None else depth
        if len(self) == 0:
            return 0.0
        return float(np.max(sys.truncation_bound(self.length, n)))


def leaf_segment(sys: SkewSystem, P: MarkovPartition, p: Any, *, strict: bool = True) -> LeafSegment:
    """The plaques ξ^u_i(p) through one or more skew points."""
    arr = _as_points(p).reshape(-1, 3)
    index, interior, chart = locate_with_chart(P, arr[:, :2])
    if strict and not np.all(interior):
        raise ValueError("ambiguous plaque: point lies on a rectangle boundary")
    lu = P.lu[index]
    return LeafSegment(
        index=index,
        height=chart[:, 1],
        position=chart[:, 0] + 0.5 * lu,
        marked=arr.copy(),
        length=lu,
    )


def plaque_base(P: MarkovPartition, leaf: LeafSegment, a: Any) -> np.ndarray:
    return plaque_point(P, leaf.index, a, leaf.height)


def plaque_fiber(sys: SkewSystem, leaf: LeafSegment, a: Any, depth: int | None = None) -> np.ndarray:
    """Fiber of each plaque at plaque coordinates `a` (broadcast against the rows)."""
    return leaf_fiber(sys, leaf.marked, np.asarray(a, dtype=float) - leaf.position, depth)


def plaque_points(sys: SkewSystem, P: MarkovPartition, leaf: LeafSegment, a: Any) -> np.ndarray:
    a_arr = np.broadcast_to(np.asarray(a, dtype=float), leaf.index.shape)
    return np.column_stack([plaque_base(P, leaf, a_arr), plaque_fiber(sys, leaf, a_arr)])


# ---------------------------------------------------------------------------
# Center-stable holonomy and cross-sections
# ---------------------------------------------------------------------------


def cs_holonomy(sys: SkewSystem, P: MarkovPartition, x: Any, y: Any, z: Any) -> np.ndarray:
    """
    H^cs_{x,y}(z): the point of ξ^u_i(y) on the center-stable plaque of z.

    Its base is W^u(π y) ∩ W^s(π z); its fiber comes from the leaf of y.
    """
    xa = _as_points(x).reshape(-1, 3)
    ya = _as_points(y).reshape(-1, 3)
    za = _as_points(z).reshape(-1, 3)
    ix, _, _ = locate_with_chart(P, xa[:, :2])
    iy, _, cy = locate_with_chart(P, ya[:, :2])
    iz, _, cz = locate_with_chart(P, za[:, :2])
    if not (np.all(ix == iy) and np.all(iy == iz)):
        raise ValueError("cs_holonomy needs x, y and z in the same rectangle")
    base = chart_point(P, iy, cz[:, 0], cy[:, 1])
    theta = leaf_fiber(sys, ya, cz[:, 0] - cy[:, 0])
    out = np.column_stack([base, theta])
    if max(np.ndim(x), np.ndim(y), np.ndim(z)) == 1:
        return out[0]
    return out


@dataclass(frozen=True, slots=True)
class CrossSection:
    """
    The center-stable plaque ξ^cs_j(a): the stable plaque of the base anchor
    times the whole fiber circle. `position` is the plaque coordinate at
    which it crosses every unstable plaque of the rectangle.
    """

    index: int
    anchor: tuple[float, float]
    position: float
    length: float

    def base(self, P: MarkovPartition, s: Any) -> np.ndarray:
        """Base point at chart height s on the stable segment."""
        return plaque_point(P, self.index, self.position, s)


def cross_section(P: MarkovPartition, anchor: Any) -> CrossSection:
    index, interior, chart = locate_with_chart(P, np.asarray(anchor, dtype=float))
    if not interior[0]:
        raise ValueError("ambiguous plaque: section anchor lies on a rectangle boundary")
    i = int(index[0])
    r = P.rectangles[i]
    a = np.asarray(anchor, dtype=float)
    return CrossSection(
        index=i,
        anchor=(float(a[0]), float(a[1])),
        position=float(chart[0, 0] + 0.5 * r.lu),
        length=r.ls,
    )


def section_at(P: MarkovPartition, index: int, position: float) -> CrossSection:
    """Cross-section of rectangle `index` at a plaque coordinate (centre height)."""
    r = P.rectangles[index]
    anchor = plaque_point(P, index, position, 0.0)
    return CrossSection(
        index=int(index),
        anchor=(float(anchor[0]), float(anchor[1])),
        position=float(position),
        length=r.ls,
    )


def section_hit(sys: SkewSystem, P: MarkovPartition, S: CrossSection, leaf: LeafSegment) -> np.ndarray:
    """The unique point of each plaque on S, as (n, 3) skew points."""
    if np.any(leaf.index != S.index):
        raise ValueError(f"leaf not in rectangle {S.index} of the section")
    base = plaque_point(P, leaf.index, S.position, leaf.height)
    theta = plaque_fiber(sys, leaf, S.position)
    return np.column_stack([base, theta])


# ---------------------------------------------------------------------------
# Validation and exponents
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class SystemReport:
    kappa: float
    delta: float
    alpha: float
    lambda_u: float
    omega: float
    leaf_lipschitz: float
    truncation_bound: float
    h1: bool
    leaf_invariance_error: float
    lipschitz_violations: int
    n_samples: int
    # None when no partition was given to sample plaques from
    h2: bool | None = None
    h2_error: float = 0.0

    @property
    def passed(self) -> bool:
        return (
            self.h1
            and self.h2 is not False
            and self.lipschitz_violations == 0
            and self.leaf_invariance_error <= 2.0 * self.truncation_bound + 1e-9
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "kappa": self.kappa,
            "delta": self.delta,
            "alpha": self.alpha,
            "lambda_u": self.lambda_u,
            "omega": self.omega,
            "leaf_lipschitz": self.leaf_lipschitz,
            "truncation_bound": self.truncation_bound,
            "h1": self.h1,
            "h2": self.h2,
            "h2_error": self.h2_error,
            "leaf_invariance_error": self.leaf_invariance_error,
            "lipschitz_violations": self.lipschitz_violations,
            "n_samples": self.n_samples,
            "passed": self.passed,
        }


def check_standing(sys: SkewSystem) -> None:
    if not (0.0 <= sys.kappa < 1.0):
        raise ValueError(f"fiber not diffeo: kappa={sys.kappa} must lie in [0, 1)")
    if sys.delta < 0.0:
        raise ValueError(f"delta must be >= 0, got {sys.delta}")
    if 1.0 + sys.kappa >= sys.lambda_u:
        raise ValueError(
            f"not partially hyperbolic: 1+kappa={1.0 + sys.kappa} >= lambda_u={sys.lambda_u:.6f}"
        )


def plaque_projection_error(
    sys: SkewSystem,
    P: MarkovPartition,
    rng: np.random.Generator,
    *,
    n_samples: int = 200,
    n_points: int = 9,
) -> tuple[bool, float]:
    """
    Sampled check that π maps computed leaf segments onto base plaques, one to one.

    Returns (injective, error): the projected chart coordinate must increase
    strictly along each segment, and error is the largest torus distance
    between a projected leaf point and the base plaque point it should cover,
    endpoints included.
    """
    pts = np.column_stack([rng.random((n_samples, 2)), rng.random(n_samples)])
    leaf = leaf_segment(sys, P, pts, strict=False)
    e_u = np.asarray(sys.base.e_u)

    ends = np.linspace(0.0, 1.0, n_points)[None, :] * leaf.length[:, None]
    mids = (np.arange(n_points)[None, :] + 0.5) / n_points * leaf.length[:, None]
    error = 0.0
    for a in (ends, mids):
        t = a - leaf.position[:, None]
        projected = wrap(leaf.marked[:, None, :2] + t[..., None] * e_u)
        plaque = plaque_base(P, leaf, a.T).transpose(1, 0, 2)
        error = max(error, float(np.max(torus_distance(projected, plaque), initial=0.0)))

    # interior points only, so the chart of the owning rectangle applies
    t = mids - leaf.position[:, None]
    projected = wrap(leaf.marked[:, None, :2] + t[..., None] * e_u)
    index, _, chart = locate_with_chart(P, projected.reshape(-1, 2))
    same = index.reshape(mids.shape) == leaf.index[:, None]
    u = chart[:, 0].reshape(mids.shape)
    injective = bool(np.all(same) and np.all(np.diff(u, axis=1) > 0.0))
    return injective, error


def validate_system(
    sys: SkewSystem,
    rng: np.random.Generator | None = None,
    *,
    P: MarkovPartition | None = None,
    n_samples: int = 200,
    reach: float = 0.1,
    h2_tol: float = 1e-9,
) -> SystemReport:
    """
    Check the standing hypotheses and sample leaf geometry.

    Leaf invariance: f of a leaf point lies on the leaf through the image of
    the marked point. Lipschitz: sampled graph slopes stay below the bound.
    The factor property π∘f = A∘π is checked bit for bit on the samples; with
    a partition, leaf segments must also project one to one onto base plaques.
    """
    check_standing(sys)
    gen = rng if rng is not None else np.random.default_rng(0)
    depth = sys.holonomy_depth

    marked = np.column_stack([gen.random((n_samples, 2)), gen.random(n_samples)])
    t = gen.uniform(-reach, reach, n_samples)
    t2 = gen.uniform(-reach, reach, n_samples)
    phi = leaf_fiber(sys, marked, t, depth)
    phi2 = leaf_fiber(sys, marked, t2, depth)

    e_u = np.asarray(sys.base.e_u)
    on_leaf = np.column_stack([wrap(marked[:, :2] + t[:, None] * e_u), phi])
    image = apply(sys, on_leaf, 1)
    image_marked = apply(sys, marked, 1)
    predicted = leaf_fiber(sys, image_marked, sys.base.mu_u * t, depth)
    diff = image[:, 2] - predicted
    invariance = float(np.max(np.abs(diff - np.round(diff)), initial=0.0))

    h1 = bool(np.array_equal(apply(sys, marked, 3)[:, :2], apply_auto(sys.base, marked[:, :2], 3)))

    bound = float(np.max(sys.truncation_bound(sys.base.lambda_u * reach, depth)))
    slope = phi - phi2
    slope = np.abs(slope - np.round(slope))
    allowed = sys.leaf_lipschitz * np.abs(t - t2) + 2.0 * bound + 1e-12
    violations = int(np.sum(slope > allowed))

    h2: bool | None = None
    h2_error = 0.0
    if P is not None:
        injective, h2_error = plaque_projection_error(sys, P, gen, n_samples=n_samples)
        h2 = injective and h2_error <= h2_tol

    report = SystemReport(
        kappa=sys.kappa,
        delta=sys.delta,
        alpha=sys.alpha,
        lambda_u=sys.lambda_u,
        omega=sys.omega,
        leaf_lipschitz=sys.leaf_lipschitz,
        truncation_bound=bound,
        h1=h1,
        leaf_invariance_error=invariance,
        lipschitz_violations=violations,
        n_samples=int(n_samples),
        h2=h2,
        h2_error=h2_error,
    )
    logger.info("validate_system: omega=%.6f invariance=%.3e", report.omega, invariance)
    return report


@dataclass(frozen=True, slots=True)
class CenterExponent:
    fiber: float
    stderr: float
    ci_low: float
    ci_high: float
    stable_lift: float
    n_samples: int
    n_steps: int

    @property
    def mostly_contracting(self) -> bool:
        return self.ci_high < 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "fiber": self.fiber,
            "stderr": self.stderr,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "stable_lift": self.stable_lift,
            "mostly_contracting": self.mostly_contracting,
            "n_samples": self.n_samples,
            "n_steps": self.n_steps,
        }


def center_exponent(
    sys: SkewSystem,
    rng: np.random.Generator,
    n_samples: int,
    n_steps: int,
    *,
    burn_in: int = 50,
    start: Any | None = None,
    confidence: float = 0.95,
) -> CenterExponent:
    """
    Birkhoff averages of log g′ along orbits, one average per orbit.

    Orbits start at `start`, normally ν^u samples on a reference plaque;
    without it they start from uniform points of M.
    """
    check_standing(sys)
    if start is None:
        pts = np.column_stack([rng.random((n_samples, 2)), rng.random(n_samples)])
    else:
        pts = _as_points(start).reshape(-1, 3)
    state = advance(sys, SkewState.from_points(pts), burn_in)

    total = np.zeros(len(state))
    for _ in range(n_steps):
        total += fiber_log_derivative(sys, state.theta)
        state = step(sys, state)
    per_orbit = total / max(n_steps, 1)

    mean = float(np.mean(per_orbit))
    n = per_orbit.shape[0]
    stderr = float(np.std(per_orbit, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    half = float(stats.t.ppf(0.5 + confidence / 2.0, df=max(n - 1, 1))) * stderr
    result = CenterExponent(
        fiber=mean,
        stderr=stderr,
        ci_low=mean - half,
        ci_high=mean + half,
        stable_lift=-math.log(sys.lambda_u),
        n_samples=int(n),
        n_steps=int(n_steps),
    )
    logger.info("center exponent %.6f ± %.2e", mean, stderr)
    return result


def make_system(
    matrix: Any,
    *,
    kappa: float,
    delta: float,
    alpha: float,
    holonomy_depth: int = DEFAULT_HOLONOMY_DEPTH,
    max_backward: int = DEFAULT_MAX_BACKWARD,
    max_iterate: int = DEFAULT_MAX_ITERATE,
    inverse_tol: float = DEFAULT_INVERSE_TOL,
    holonomy_tol: float = DEFAULT_HOLONOMY_TOL,
) -> SkewSystem:
    auto = matrix if isinstance(matrix, ToralAutomorphism) else eigen_data(matrix)
    return SkewSystem(
        base=auto,
        kappa=float(kappa),
        delta=float(delta),
        alpha=float(alpha),
        holonomy_depth=int(holonomy_depth),
        max_backward=int(max_backward),
        max_iterate=int(max_iterate),
        inverse_tol=float(inverse_tol),
        holonomy_tol=float(holonomy_tol),
    )
