# src/skewlab/estimators.py
from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy import stats

logger = logging.getLogger(__name__)

DEFAULT_KS_CAP: int = 1000
DEFAULT_N_BOOT: int = 200


@dataclass(frozen=True, slots=True)
class LogLinearFit:
    """log_base(value) ≈ intercept + slope·n."""

    slope: float
    intercept: float
    r2: float
    n_points: int
    base: float = 10.0

    @property
    def rate(self) -> float:
        """Per-unit ratio base**slope."""
        return float(self.base**self.slope)

    @property
    def prefactor(self) -> float:
        return float(self.base**self.intercept)

    def to_dict(self) -> dict[str, Any]:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "r2": self.r2,
            "n_points": self.n_points,
            "rate": self.rate,
            "prefactor": self.prefactor,
        }


def log_linear_fit(n: Sequence[float], values: Sequence[float], *, base: float = 10.0) -> LogLinearFit:
    x = np.asarray(n, dtype=float)
    y = np.asarray(values, dtype=float)
    if x.shape != y.shape:
        raise ValueError("log_linear_fit needs matching n and value arrays")
    if x.shape[0] < 2:
        raise ValueError("log_linear_fit needs at least two points")
    if np.any(y <= 0):
        raise ValueError("log_linear_fit needs positive values")
    logs = np.log(y) / math.log(base)
    if np.ptp(logs) == 0.0:
        return LogLinearFit(slope=0.0, intercept=float(logs[0]), r2=1.0, n_points=int(x.shape[0]), base=base)
    res = stats.linregress(x, logs)
    return LogLinearFit(
        slope=float(res.slope),
        intercept=float(res.intercept),
        r2=float(res.rvalue**2),
        n_points=int(x.shape[0]),
        base=base,
    )


def ks_uniform(samples: Any, lo: float, hi: float) -> float:
    x = np.asarray(samples, dtype=float).ravel()
    return float(stats.kstest(x, "uniform", args=(lo, hi - lo)).statistic)


def ks_2d(a: Any, b: Any, *, cap: int = DEFAULT_KS_CAP) -> float:
    """
    Two-sample 2D Kolmogorov–Smirnov statistic over the four quadrant
    orderings, evaluated at origins taken from both samples.

    At most `cap` origins are used, half from each sample, in sample order.
    """
    pa = np.asarray(a, dtype=float).reshape(-1, 2)
    pb = np.asarray(b, dtype=float).reshape(-1, 2)
    if pa.shape[0] == 0 or pb.shape[0] == 0:
        raise ValueError("ks_2d needs non-empty samples")
    half = max(cap // 2, 1)
    origins = np.concatenate([pa[:half], pb[:half]])

    def quadrants(p: np.ndarray) -> np.ndarray:
        left = p[None, :, 0] <= origins[:, None, 0]
        low = p[None, :, 1] <= origins[:, None, 1]
        return np.stack(
            [
                np.mean(left & low, axis=1),
                np.mean(left & ~low, axis=1),
                np.mean(~left & low, axis=1),
                np.mean(~left & ~low, axis=1),
            ]
        )

    return float(np.max(np.abs(quadrants(pa) - quadrants(pb))))


@dataclass(frozen=True, slots=True)
class Proportion:
    successes: int
    trials: int
    low: float
    high: float

    @property
    def value(self) -> float:
        return self.successes / self.trials if self.trials else 0.0


def wilson_interval(successes: int, trials: int, *, confidence: float = 0.95) -> Proportion:
    if trials <= 0:
        raise ValueError("wilson_interval needs at least one trial")
    ci = stats.binomtest(int(successes), int(trials)).proportion_ci(confidence_level=confidence, method="wilson")
    return Proportion(successes=int(successes), trials=int(trials), low=float(ci.low), high=float(ci.high))


def weighted_mean(values: Any, weights: Any | None = None) -> float:
    v = np.asarray(values, dtype=float)
    if weights is None:
        return float(np.mean(v))
    w = np.asarray(weights, dtype=float)
    return float(np.sum(w * v) / np.sum(w))


def bootstrap_stderr(
    values: Any,
    rng: np.random.Generator,
    *,
    weights: Any | None = None,
    n_boot: int = DEFAULT_N_BOOT,
) -> float:
    """Standard deviation of resampled (weighted) means."""
    v = np.asarray(values, dtype=float).ravel()
    n = v.shape[0]
    if n < 2:
        return 0.0
    if np.ptp(v) == 0.0:
        return 0.0
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float).ravel()
    means = np.empty(n_boot)
    for b in range(n_boot):
        idx = rng.integers(0, n, size=n)
        means[b] = np.sum(w[idx] * v[idx]) / np.sum(w[idx])
    return float(np.std(means, ddof=1))


def above_noise(values: Any, stderr: Any, *, factor: float = 3.0) -> np.ndarray:
    return np.abs(np.asarray(values, dtype=float)) > factor * np.asarray(stderr, dtype=float)


def non_increasing(props: Sequence[Proportion]) -> bool:
    """No consecutive pair shows a significant increase at the intervals' level."""
    return all(later.low <= earlier.high for earlier, later in zip(props, props[1:]))


def kendall_decreasing_pvalue(n: Sequence[float], values: Sequence[float]) -> float:
    res = stats.kendalltau(np.asarray(n, dtype=float), np.asarray(values, dtype=float), alternative="less")
    return float(res.pvalue) if np.isfinite(res.pvalue) else 1.0


# ---------------------------------------------------------------------------
# Circular clustering
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Cluster:
    centre: float
    count: int
    mass: float
    width: float


def _unit(x: float) -> float:
    r = x % 1.0
    # -1e-17 % 1.0 rounds up to 1.0
    return 0.0 if r >= 1.0 else r


def circular_clusters(theta: Any, *, eps: float, weights: Any | None = None) -> list[Cluster]:
    """
    Single-linkage clusters of angles in [0, 1) at resolution eps.

    Neighbours closer than eps (cyclically) share a cluster. Clusters are
    returned by decreasing mass.
    """
    raw = np.mod(np.asarray(theta, dtype=float).ravel(), 1.0)
    n = raw.shape[0]
    if n == 0:
        return []
    sort = np.argsort(raw, kind="stable")
    th = raw[sort]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float).ravel()[sort]

    gaps = np.diff(np.concatenate([th, [th[0] + 1.0]]))
    breaks = np.flatnonzero(gaps >= eps)
    if breaks.size == 0:
        centre = _unit(float(np.angle(np.sum(w * np.exp(2j * np.pi * th))) / (2 * np.pi)))
        return [Cluster(centre=centre, count=n, mass=float(w.sum()), width=1.0)]

    # rotate so the first cluster starts right after a break
    start = (breaks[-1] + 1) % n
    order = np.roll(np.arange(n), -start)
    rot_th = th[order]
    rot_w = w[order]
    rot_gaps = gaps[order]

    clusters: list[Cluster] = []
    begin = 0
    for pos in range(n):
        if rot_gaps[pos] >= eps or pos == n - 1:
            seg = rot_th[begin : pos + 1]
            seg_w = rot_w[begin : pos + 1]
            unwrapped = np.unwrap(seg * 2 * np.pi) / (2 * np.pi)
            centre = _unit(float(np.sum(seg_w * unwrapped) / np.sum(seg_w)))
            clusters.append(
                Cluster(
                    centre=centre,
                    count=int(seg.shape[0]),
                    mass=float(seg_w.sum()),
                    width=float(unwrapped[-1] - unwrapped[0]),
                )
            )
            begin = pos + 1
    clusters.sort(key=lambda c: (-c.mass, c.centre))
    return clusters
