# src/skewlab/gibbs.py
from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree

from .estimators import bootstrap_stderr, weighted_mean
from .partition import MarkovPartition
from .reference import ReferenceMeasure, sample
from .system import SkewState, SkewSystem, advance, leaf_fiber, step
from .torus import wrap

logger = logging.getLogger(__name__)

ESTIMATORS: tuple[str, ...] = ("birkhoff", "cesaro")
DEFAULT_BURN_IN: int = 50
DEFAULT_MAX_PIECES: int = 20_000


@dataclass(frozen=True, slots=True, eq=False)
class EmpiricalMeasure:
    """Weighted particles on T² × S¹; weights sum to one."""

    points: np.ndarray
    weights: np.ndarray
    provenance: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.points.ndim != 2 or self.points.shape[1] != 3:
            raise ValueError("particles must be an (n, 3) array")
        if self.weights.shape != (self.points.shape[0],):
            raise ValueError("one weight per particle is required")
        if np.any(self.weights < 0):
            raise ValueError("particle weights must be non-negative")
        total = float(self.weights.sum())
        if self.points.shape[0] and abs(total - 1.0) > 1e-12:
            raise ValueError(f"particle weights must sum to 1, got {total!r}")

    def __len__(self) -> int:
        return int(self.points.shape[0])

    @classmethod
    def uniform(cls, points: np.ndarray, provenance: dict[str, Any] | None = None) -> EmpiricalMeasure:
        n = points.shape[0]
        return cls(points=points, weights=np.full(n, 1.0 / n), provenance=dict(provenance or {}))

    def restrict(self, mask: np.ndarray) -> tuple[EmpiricalMeasure, float]:
        """Normalised restriction and the mass it carried."""
        mass = float(self.weights[mask].sum())
        if mass == 0.0:
            raise ValueError("restriction carries no mass")
        return (
            EmpiricalMeasure(
                points=self.points[mask],
                weights=self.weights[mask] / mass,
                provenance=dict(self.provenance),
            ),
            mass,
        )

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "x1": self.points[:, 0],
                "x2": self.points[:, 1],
                "theta": self.points[:, 2],
                "weight": self.weights,
            }
        )


def merge_measures(parts: Sequence[EmpiricalMeasure], masses: Sequence[float] | None = None) -> EmpiricalMeasure:
    """Weighted union; by default each part weighs in proportion to its particle count."""
    if not parts:
        raise ValueError("nothing to merge")
    m = np.asarray([len(p) for p in parts] if masses is None else masses, dtype=float)
    m = m / m.sum()
    points = np.concatenate([p.points for p in parts])
    weights = np.concatenate([p.weights * mk for p, mk in zip(parts, m)])
    return EmpiricalMeasure(
        points=points,
        weights=weights / weights.sum(),
        provenance={"merged": [p.provenance for p in parts]},
    )


def estimate_mu(
    sys: SkewSystem,
    P: MarkovPartition,
    source: ReferenceMeasure,
    n_particles: int,
    n_iterates: int,
    burn_in: int,
    rng: np.random.Generator,
    *,
    estimator: str = "birkhoff",
    seed: int | None = None,
) -> EmpiricalMeasure:
    """
    Particles for μ from pushed reference samples.

    `birkhoff` keeps every iterate j in [burn_in, n_iterates] of each chain;
    `cesaro` draws one time uniformly from that range per sample, which is a
    literal sample of the averaged pushforwards.
    """
    if estimator not in ESTIMATORS:
        raise ValueError(f"unknown estimator {estimator!r}; expected one of {ESTIMATORS}")
    if not (0 <= burn_in <= n_iterates):
        raise ValueError("need 0 <= burn_in <= n_iterates")

    span = n_iterates - burn_in + 1
    if estimator == "birkhoff":
        n_chains = math.ceil(n_particles / span)
        state = advance(sys, SkewState.from_points(sample(sys, P, source, rng, n_chains)), burn_in)
        frames = [state.points]
        for _ in range(span - 1):
            state = step(sys, state)
            frames.append(state.points)
        # chain-major order
        cloud = np.stack(frames, axis=1).reshape(-1, 3)[:n_particles]
    else:
        times = rng.integers(burn_in, n_iterates + 1, size=n_particles)
        state = SkewState.from_points(sample(sys, P, source, rng, n_particles))
        cloud = np.empty((n_particles, 3))
        for t in range(n_iterates + 1):
            hit = times == t
            if np.any(hit):
                cloud[hit] = state.take(hit).points
            if t < n_iterates:
                state = step(sys, state)

    provenance = {
        "estimator": estimator,
        "seed": seed,
        "n_particles": int(n_particles),
        "n_iterates": int(n_iterates),
        "burn_in": int(burn_in),
        "source_index": source.index,
        "source_point": [float(v) for v in source.marked],
    }
    logger.info("estimate_mu(%s): %d particles", estimator, n_particles)
    return EmpiricalMeasure.uniform(cloud, provenance)


def integrate(
    m: EmpiricalMeasure,
    phi: Callable[[np.ndarray], np.ndarray],
    rng: np.random.Generator,
    *,
    n_boot: int = 200,
) -> tuple[float, float]:
    values = np.asarray(phi(m.points), dtype=float)
    return weighted_mean(values, m.weights), bootstrap_stderr(values, rng, weights=m.weights, n_boot=n_boot)


def invariance_gap(
    sys: SkewSystem,
    m: EmpiricalMeasure,
    phi: Callable[[np.ndarray], np.ndarray],
    rng: np.random.Generator,
    *,
    n_boot: int = 200,
) -> tuple[float, float]:
    """∫φ∘f dm − ∫φ dm and its bootstrap standard error."""
    image = step(sys, SkewState.from_points(m.points)).points
    diff = np.asarray(phi(image), dtype=float) - np.asarray(phi(m.points), dtype=float)
    return weighted_mean(diff, m.weights), bootstrap_stderr(diff, rng, weights=m.weights, n_boot=n_boot)


def u_saturation(
    sys: SkewSystem,
    m: EmpiricalMeasure,
    rng: np.random.Generator,
    *,
    n_probe: int = 50,
    reach: float = 0.05,
    n_along: int = 21,
    eps: float = 1e-2,
) -> float:
    """
    Fraction of leaf points near sampled particles that have a particle of
    the same cloud within eps (periodic distance on T² × S¹).
    """
    tree = cKDTree(wrap(m.points), boxsize=1.0)
    chosen = m.points[rng.choice(len(m), size=min(n_probe, len(m)), replace=False)]
    t = np.linspace(-reach, reach, n_along)
    theta = leaf_fiber(sys, chosen[:, None, :], t[None, :])
    base = wrap(chosen[:, None, :2] + t[None, :, None] * np.asarray(sys.base.e_u))
    probes = np.concatenate([base, theta[..., None]], axis=-1).reshape(-1, 3)
    dist, _ = tree.query(wrap(probes))
    return float(np.mean(dist < eps))


# ---------------------------------------------------------------------------
# Hölder densities on unstable plaques
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True, eq=False)
class DensityPiece:
    """Log-density on one plaque, sampled on a uniform mesh of [0, L_u(index)]."""

    index: int
    weight: float
    mesh: np.ndarray
    log_density: np.ndarray


@dataclass(frozen=True, slots=True, eq=False)
class HolderDensityState:
    """
    A finite convex combination of plaque densities e^ρ dν^u with a bound R
    on the γ-Hölder constant of every ρ (in plaque arc length).
    """

    pieces: tuple[DensityPiece, ...]
    holder_constant_bound: float
    gamma: float
    steps: int = 0

    @property
    def total_weight(self) -> float:
        return float(sum(p.weight for p in self.pieces))


def _normalise(mesh: np.ndarray, rho: np.ndarray) -> tuple[np.ndarray, float]:
    length = float(mesh[-1] - mesh[0])
    integral = float(np.trapezoid(np.exp(rho), mesh)) / length
    return rho - math.log(integral), integral


def density_integral(piece: DensityPiece) -> float:
    """∫ e^ρ dν^u of one piece."""
    length = float(piece.mesh[-1] - piece.mesh[0])
    return float(np.trapezoid(np.exp(piece.log_density), piece.mesh)) / length


def random_holder_state(
    P: MarkovPartition,
    i: int,
    R: float,
    gamma: float,
    rng: np.random.Generator,
    *,
    mesh_size: int = 257,
    modes: int = 6,
) -> HolderDensityState:
    """A random normalised density on the plaques of rectangle i with Hölder constant exactly R on the mesh."""
    length = float(P.lu[i])
    mesh = np.linspace(0.0, length, mesh_size)
    rho = np.zeros(mesh_size)
    for k in range(1, modes + 1):
        rho += rng.normal() / k * np.sin(2.0 * math.pi * k * mesh / length + rng.uniform(0.0, 2.0 * math.pi))
    piece = DensityPiece(index=int(i), weight=1.0, mesh=mesh, log_density=rho)
    measured = measured_holder(HolderDensityState(pieces=(piece,), holder_constant_bound=math.inf, gamma=gamma))
    scaled = rho * (R / measured) if measured > 0 else rho * 0.0
    normed, _ = _normalise(mesh, scaled)
    return HolderDensityState(
        pieces=(DensityPiece(index=int(i), weight=1.0, mesh=mesh, log_density=normed),),
        holder_constant_bound=float(R),
        gamma=float(gamma),
    )


def measured_holder(state: HolderDensityState) -> float:
    """Largest |ρ(a) − ρ(b)| / |a − b|^γ over mesh node pairs of every piece."""
    worst = 0.0
    for piece in state.pieces:
        a = piece.mesh
        d = np.abs(a[:, None] - a[None, :])
        np.fill_diagonal(d, np.inf)
        diff = np.abs(piece.log_density[:, None] - piece.log_density[None, :])
        worst = max(worst, float(np.max(diff / d**state.gamma)))
    return worst


def push_density(
    sys: SkewSystem,
    P: MarkovPartition,
    state: HolderDensityState,
    *,
    max_pieces: int = DEFAULT_MAX_PIECES,
) -> HolderDensityState:
    """
    Push every plaque density one step forward.

    A piece on rectangle i splits along its allowed transitions; on the image
    plaque j the new log-density is ρ(shift + scale·b) plus the normaliser
    that makes it integrate to one, and the piece weight picks up the mass of
    the subcylinder.
    """
    new_count = sum(int(P.transition[p.index].sum()) for p in state.pieces)
    if new_count > max_pieces:
        raise ValueError(f"depth budget: pushing would create {new_count} pieces (max {max_pieces})")

    pieces: list[DensityPiece] = []
    for piece in state.pieces:
        i = piece.index
        for j in P.successors(i):
            mesh = np.linspace(0.0, float(P.lu[j]), piece.mesh.shape[0])
            pre = P.shift[i, j] + P.scale * mesh
            rho = np.interp(pre, piece.mesh, piece.log_density)
            normed, integral = _normalise(mesh, rho)
            # integral is the ν^u_j-average of e^ρ; the subcylinder carries weights[i, j] of ν^u_i
            mass = float(P.weights[i, j]) * integral
            pieces.append(DensityPiece(index=int(j), weight=piece.weight * mass, mesh=mesh, log_density=normed))

    total = sum(p.weight for p in pieces)
    pieces = [DensityPiece(index=p.index, weight=p.weight / total, mesh=p.mesh, log_density=p.log_density) for p in pieces]
    return HolderDensityState(
        pieces=tuple(pieces),
        holder_constant_bound=state.holder_constant_bound * sys.omega**state.gamma,
        gamma=state.gamma,
        steps=state.steps + 1,
    )
