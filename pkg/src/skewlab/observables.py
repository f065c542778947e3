# src/skewlab/observables.py
from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass, replace
from typing import Any

import numpy as np

from .partition import MarkovPartition, locate_with_chart

TWO_PI = 2.0 * math.pi
MAX_DISTANCE: float = math.sqrt(3.0) / 2.0
_SEMINORM_GRID = np.linspace(1e-6, MAX_DISTANCE, 200_001)


@dataclass(frozen=True, slots=True)
class TrigTerm:
    coef: float
    kind: str
    k: tuple[int, int, int]

    def __call__(self, points: np.ndarray) -> np.ndarray:
        phase = TWO_PI * (points @ np.asarray(self.k, dtype=float))
        return self.coef * (np.cos(phase) if self.kind == "cos" else np.sin(phase))

    @property
    def freq(self) -> float:
        return float(np.linalg.norm(self.k))


def _trig_seminorm(freq: float, gamma: float) -> float:
    """sup_d 2|sin(π·min(freq·d, 1/2))| / d^γ over torus distances d."""
    if freq == 0.0:
        return 0.0
    arg = np.minimum(freq * _SEMINORM_GRID, 0.5)
    return float(np.max(2.0 * np.sin(math.pi * arg) / _SEMINORM_GRID**gamma))


def _ramp_seminorm(lip: float, osc: float, gamma: float) -> float:
    """sup_d min(osc, lip·d) / d^γ."""
    if lip == 0.0 or osc == 0.0:
        return 0.0
    return float(np.max(np.minimum(osc, lip * _SEMINORM_GRID) / _SEMINORM_GRID**gamma))


@dataclass(frozen=True, slots=True)
class Observable:
    """
    A closed-form observable on T² × S¹ with controlled Hölder norm.

    Trig observables are `constant + Σ coef·cos/sin(2π k·(x₁, x₂, θ))`.
    The `log_derivative` kind is log(1 − kappa·cos 2πθ) + constant; the
    `membership` kind is a ramped indicator of one rectangle.
    """

    tag: str
    terms: tuple[TrigTerm, ...] = ()
    constant: float = 0.0
    gamma: float = 1.0
    kappa: float | None = None
    evaluator: Callable[[np.ndarray], np.ndarray] | None = None
    sup_bound: float | None = None
    lipschitz_bound: float | None = None

    def __call__(self, points: Any) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        flat = pts.reshape(-1, 3)
        if self.kappa is not None:
            out = np.log(1.0 - self.kappa * np.cos(TWO_PI * flat[:, 2]))
        elif self.evaluator is not None:
            out = self.evaluator(flat)
        else:
            out = np.zeros(flat.shape[0])
            for term in self.terms:
                out = out + term(flat)
        return (out + self.constant).reshape(pts.shape[:-1])

    @property
    def sup_norm(self) -> float:
        if self.kappa is not None:
            lo = math.log(1.0 - self.kappa)
            hi = math.log(1.0 + self.kappa)
            return max(abs(lo + self.constant), abs(hi + self.constant))
        if self.sup_bound is not None:
            return max(abs(self.constant), abs(self.sup_bound + self.constant))
        return abs(self.constant) + sum(abs(t.coef) for t in self.terms)

    @property
    def lipschitz(self) -> float:
        if self.kappa is not None:
            return TWO_PI * self.kappa / math.sqrt(1.0 - self.kappa**2)
        if self.lipschitz_bound is not None:
            return self.lipschitz_bound
        return sum(abs(t.coef) * TWO_PI * t.freq for t in self.terms)

    @property
    def seminorm(self) -> float:
        if self.kappa is not None:
            osc = math.log((1.0 + self.kappa) / (1.0 - self.kappa))
            return _ramp_seminorm(self.lipschitz, osc, self.gamma)
        if self.lipschitz_bound is not None:
            return _ramp_seminorm(self.lipschitz_bound, self.sup_bound or 1.0, self.gamma)
        return sum(abs(t.coef) * _trig_seminorm(t.freq, self.gamma) for t in self.terms)

    @property
    def holder_norm(self) -> float:
        return self.sup_norm + self.seminorm

    def shifted(self, c: float) -> Observable:
        """The same observable plus a constant."""
        return replace(self, constant=self.constant + float(c), tag=f"{self.tag}{c:+.6g}")

    def with_gamma(self, gamma: float) -> Observable:
        if not (0.0 < gamma <= 1.0):
            raise ValueError("Hölder exponent must lie in (0, 1]")
        return replace(self, gamma=float(gamma))

    def to_dict(self) -> dict[str, Any]:
        return {
            "tag": self.tag,
            "constant": self.constant,
            "gamma": self.gamma,
            "sup_norm": self.sup_norm,
            "holder_norm": self.holder_norm,
        }


def _trig(tag: str, *terms: tuple[float, str, tuple[int, int, int]]) -> Observable:
    return Observable(tag=tag, terms=tuple(TrigTerm(coef=c, kind=k, k=v) for c, k, v in terms))


CATALOG: dict[str, Callable[[], Observable]] = {
    "one": lambda: Observable(tag="one", constant=1.0),
    "cos_theta": lambda: _trig("cos_theta", (1.0, "cos", (0, 0, 1))),
    "sin_theta": lambda: _trig("sin_theta", (1.0, "sin", (0, 0, 1))),
    "cos_x1": lambda: _trig("cos_x1", (1.0, "cos", (1, 0, 0))),
    "sin_x1": lambda: _trig("sin_x1", (1.0, "sin", (1, 0, 0))),
    "cos_x2": lambda: _trig("cos_x2", (1.0, "cos", (0, 1, 0))),
    "cos_x1_theta": lambda: _trig("cos_x1_theta", (1.0, "cos", (1, 0, 1))),
}


def catalog_names() -> list[str]:
    return sorted(CATALOG)


def observable(name: str, *, gamma: float = 1.0) -> Observable:
    try:
        factory = CATALOG[name]
    except KeyError:
        raise ValueError(f"unknown observable {name!r}; expected one of {catalog_names()}") from None
    return factory().with_gamma(gamma)


def log_derivative_observable(kappa: float, *, gamma: float = 1.0) -> Observable:
    if not (0.0 <= kappa < 1.0):
        raise ValueError("fiber not diffeo: kappa must lie in [0, 1)")
    return Observable(tag="log_derivative", kappa=float(kappa), gamma=float(gamma))


def membership_observable(P: MarkovPartition, j: int, *, ramp: float = 0.01, gamma: float = 1.0) -> Observable:
    """
    Ramped indicator of rectangle j: 1 deep inside, falling linearly to 0 over
    `ramp` (in eigencoordinates) at the sides.
    """
    r = P.rectangles[j]
    if ramp <= 0 or 2 * ramp >= min(r.lu, r.ls):
        raise ValueError("membership ramp must be positive and smaller than half the rectangle")

    def evaluate(points: np.ndarray) -> np.ndarray:
        index, _, chart = locate_with_chart(P, points[:, :2])
        du = 0.5 * r.lu - np.abs(chart[:, 0])
        ds = 0.5 * r.ls - np.abs(chart[:, 1])
        value = np.clip(du / ramp, 0.0, 1.0) * np.clip(ds / ramp, 0.0, 1.0)
        return np.where(index == j, value, 0.0)

    lip = math.sqrt(2.0) * float(np.linalg.norm(P.auto.inverse_basis, 2)) / ramp
    return Observable(
        tag=f"membership_{j}",
        evaluator=evaluate,
        sup_bound=1.0,
        lipschitz_bound=lip,
        gamma=float(gamma),
    )


def standard_observables(P: MarkovPartition) -> dict[str, Observable]:
    """Fiber, base and partition-aligned observables used for cross-run comparisons."""
    out = {name: observable(name) for name in ("cos_theta", "sin_theta", "cos_x1")}
    for j in range(P.k):
        r = P.rectangles[j]
        out[f"membership_{j}"] = membership_observable(P, j, ramp=min(0.01, 0.25 * min(r.lu, r.ls)))
    return out


def sampled_seminorm(obs: Observable, rng: np.random.Generator, n_pairs: int = 20_000, scale: float = 0.05) -> float:
    """Largest |φ(p) − φ(q)| / d(p, q)^γ over random nearby pairs."""
    p = rng.random((n_pairs, 3))
    step = rng.normal(scale=scale, size=(n_pairs, 3)) * rng.random((n_pairs, 1))
    q = np.mod(p + step, 1.0)
    d = np.linalg.norm(step - np.round(step), axis=1)
    keep = d > 1e-9
    ratio = np.abs(obs(p[keep]) - obs(q[keep])) / d[keep] ** obs.gamma
    return float(np.max(ratio, initial=0.0))
