# src/skewlab/stats.py
from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import pandas as pd

from .coupling import ContractionProfile, PlaqueFrame, cylinder_sums
from .estimators import (
    LogLinearFit,
    Proportion,
    above_noise,
    bootstrap_stderr,
    kendall_decreasing_pvalue,
    log_linear_fit,
    non_increasing,
    wilson_interval,
)
from .gibbs import EmpiricalMeasure
from .observables import Observable
from .partition import MarkovPartition, cylinder_table
from .reference import ReferenceMeasure, sample
from .system import SkewState, SkewSystem, advance, step
from .torus import ToralAutomorphism

logger = logging.getLogger(__name__)

TREND_LEVEL: float = 0.05
NOISE_FACTOR: float = 3.0


def draw(m: EmpiricalMeasure, rng: np.random.Generator, n: int) -> np.ndarray:
    """n particles drawn from an empirical measure by weight."""
    idx = rng.choice(len(m), size=int(n), replace=True, p=m.weights)
    return m.points[idx]


# ---------------------------------------------------------------------------
# Large deviations
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class DeviationReport:
    alpha: float
    n_values: tuple[int, ...]
    tail: tuple[Proportion, ...]
    fit: LogLinearFit | None
    status: str
    source: str = "mu"
    stride: int = 1
    trend_pvalue: float = 1.0

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([p.value for p in self.tail])

    @property
    def c_alpha(self) -> float:
        """Decay exponent per iterate of f."""
        return math.nan if self.fit is None else -self.fit.slope / self.stride

    @property
    def C_alpha(self) -> float:
        return math.nan if self.fit is None else self.fit.prefactor

    @property
    def monotone(self) -> bool:
        return non_increasing(self.tail) and self.trend_pvalue < TREND_LEVEL

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "n": list(self.n_values),
                "iterates": [n * self.stride for n in self.n_values],
                "tail": self.probabilities,
                "low": [p.low for p in self.tail],
                "high": [p.high for p in self.tail],
                "hits": [p.successes for p in self.tail],
                "trials": [p.trials for p in self.tail],
            }
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "alpha": self.alpha,
            "source": self.source,
            "stride": self.stride,
            "status": self.status,
            "c_alpha": self.c_alpha,
            "C_alpha": self.C_alpha,
            "trend_pvalue": self.trend_pvalue,
            "monotone": self.monotone,
            "fit": None if self.fit is None else self.fit.to_dict(),
        }


def birkhoff_sums(
    sys: SkewSystem,
    starts: np.ndarray,
    phi: Observable,
    n_values: Sequence[int],
    *,
    center: float = 0.0,
    stride: int = 1,
) -> np.ndarray:
    """S_nφ = Σ_{j<n} (φ − center)(f^{stride·j} x) for every n in n_values, shape (len(n_values), n_starts)."""
    wanted = sorted({int(n) for n in n_values})
    if not wanted or wanted[0] < 1:
        raise ValueError("n_values must be positive")
    out = np.empty((len(n_values), starts.shape[0]))
    state = SkewState.from_points(starts)
    acc = np.zeros(starts.shape[0])
    pos = {n: [i for i, v in enumerate(n_values) if int(v) == n] for n in wanted}
    for j in range(1, wanted[-1] + 1):
        acc += phi(state.points) - center
        if j in pos:
            for i in pos[j]:
                out[i] = acc
        if j < wanted[-1]:
            state = advance(sys, state, stride)
    return out


def _tail_report(
    sums: np.ndarray,
    n_values: Sequence[int],
    alpha: float,
    *,
    source: str,
    stride: int,
) -> DeviationReport:
    ns = tuple(int(n) for n in n_values)
    trials = sums.shape[1]
    tail = tuple(
        wilson_interval(int(np.sum(np.abs(s / n) > alpha)), trials) for s, n in zip(sums, ns)
    )
    probs = np.array([p.value for p in tail])
    if probs[0] == 0.0:
        return DeviationReport(alpha=alpha, n_values=ns, tail=tail, fit=None, status="alpha too large", source=source, stride=stride)
    keep = probs > 0.0
    fit = None
    status = "ok"
    if int(keep.sum()) >= 2:
        fit = log_linear_fit(np.asarray(ns)[keep], probs[keep], base=math.e)
    else:
        status = "insufficient tails"
    pvalue = kendall_decreasing_pvalue(ns, probs) if len(ns) >= 3 else 1.0
    return DeviationReport(
        alpha=alpha,
        n_values=ns,
        tail=tail,
        fit=fit,
        status=status,
        source=source,
        stride=stride,
        trend_pvalue=pvalue,
    )


def birkhoff_tail(
    sys: SkewSystem,
    m: EmpiricalMeasure,
    phi: Observable,
    alpha: float,
    n_values: Sequence[int],
    n_samples: int,
    rng: np.random.Generator,
    *,
    center: float | None = None,
    stride: int = 1,
) -> DeviationReport:
    """
    μ({|S_nφ/n| > α}) for μ-distributed starts.

    φ is re-centred by `center` (by default its integral against m) so the
    sums concentrate at zero; with `stride` the sums run along f^stride.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    c = float(np.sum(m.weights * phi(m.points))) if center is None else float(center)
    starts = draw(m, rng, n_samples)
    sums = birkhoff_sums(sys, starts, phi, n_values, center=c, stride=stride)
    report = _tail_report(sums, n_values, alpha, source="mu", stride=stride)
    logger.info("birkhoff_tail(alpha=%g, stride=%d): %s", alpha, stride, report.status)
    return report


def reference_tail(
    sys: SkewSystem,
    P: MarkovPartition,
    source: ReferenceMeasure,
    phi: Observable,
    alpha: float,
    n_values: Sequence[int],
    n_samples: int,
    rng: np.random.Generator,
    *,
    center: float,
) -> DeviationReport:
    """The same tails for starts drawn from a reference measure instead of μ."""
    starts = sample(sys, P, source, rng, n_samples)
    sums = birkhoff_sums(sys, starts, phi, n_values, center=center)
    return _tail_report(sums, n_values, alpha, source="reference", stride=1)


def iid_control(
    sys: SkewSystem,
    m: EmpiricalMeasure,
    phi: Observable,
    alpha: float,
    n_values: Sequence[int],
    n_samples: int,
    rng: np.random.Generator,
    *,
    center: float | None = None,
) -> DeviationReport:
    """
    Tails of sums of shuffled orbit values: the same marginal as the
    dynamical sums with the time correlations removed.
    """
    c = float(np.sum(m.weights * phi(m.points))) if center is None else float(center)
    top = max(int(n) for n in n_values)
    state = SkewState.from_points(draw(m, rng, n_samples))
    values = np.empty((top, n_samples))
    for j in range(top):
        values[j] = phi(state.points) - c
        state = step(sys, state)
    flat = values.ravel()
    rng.shuffle(flat)
    cum = np.cumsum(flat.reshape(top, n_samples), axis=0)
    sums = np.stack([cum[int(n) - 1] for n in n_values])
    return _tail_report(sums, n_values, alpha, source="iid", stride=1)


def stride_consistency(base: DeviationReport, strided: DeviationReport, *, factor: float = 2.0) -> bool:
    """c_α per unit time agrees within `factor` between f and f^stride."""
    a, b = base.c_alpha, strided.c_alpha
    if not (math.isfinite(a) and math.isfinite(b)) or a <= 0 or b <= 0:
        return False
    return max(a, b) / min(a, b) <= factor


# ---------------------------------------------------------------------------
# Exact cylinder cumulant bound
# ---------------------------------------------------------------------------


def cumulant_bound(
    sys: SkewSystem,
    P: MarkovPartition,
    profile: ContractionProfile,
    phi: Observable,
    n_max: int,
    *,
    frame: PlaqueFrame,
    n_points: int = 33,
    fit_depth: int = 0,
) -> pd.DataFrame:
    """
    Σ_j c_j exp(s1·max_j S_nφ) over the depth-n cylinders of one plaque,
    against θ^{s1·n}, for n = 1..n_max.

    θ is the profile's θ1 when `fit_depth` is 0. Otherwise it is the smallest
    rate covering depths 1..fit_depth for φ itself; rows with in_fit False
    then test whether that rate carries over to deeper cylinders.
    """
    if n_max > P.cylinder_cap:
        raise ValueError(f"cylinder explosion: n_max={n_max} exceeds cap {P.cylinder_cap}")
    if not (0 <= fit_depth <= n_max):
        raise ValueError(f"fit_depth must lie in [0, {n_max}], got {fit_depth}")
    s1 = profile.s1
    lhs, counts = [], []
    for n in range(1, n_max + 1):
        table = cylinder_table(P, frame.end, n)
        sums = cylinder_sums(sys, P, frame, table.offset, table.scale, table.end, n, phi, phi.lipschitz, n_points=n_points)
        mass = np.abs(table.scale) * P.lu[table.end] / P.lu[frame.end]
        lhs.append(float(np.sum(mass * np.exp(s1 * sums))))
        counts.append(len(table))

    if fit_depth:
        theta = math.exp(max(math.log(lhs[n - 1]) / (s1 * n) for n in range(1, fit_depth + 1)))
    else:
        theta = profile.theta1

    rows = []
    for n in range(1, n_max + 1):
        bound = theta ** (s1 * n)
        value = lhs[n - 1]
        rows.append(
            {
                "n": n,
                "lhs": value,
                "bound": bound,
                "holds": bool(value <= bound * (1.0 + 1e-12)),
                "cylinders": counts[n - 1],
                "in_fit": n <= fit_depth,
            }
        )
        logger.debug("cumulant n=%d: %.4e vs %.4e", n, value, bound)
    return pd.DataFrame(rows)


# ---------------------------------------------------------------------------
# Decay of correlations
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class CorrelationSeries:
    n_values: tuple[int, ...]
    values: np.ndarray
    stderr: np.ndarray
    fit: LogLinearFit | None
    status: str
    oracle: np.ndarray | None = field(default=None)

    @property
    def tau(self) -> float:
        return math.nan if self.fit is None else self.fit.rate

    @property
    def K(self) -> float:
        return math.nan if self.fit is None else self.fit.prefactor

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({"n": list(self.n_values), "correlation": self.values, "stderr": self.stderr})
        if self.oracle is not None:
            frame["oracle"] = self.oracle
        return frame

    def to_dict(self) -> dict[str, Any]:
        return {
            "status": self.status,
            "tau": self.tau,
            "K": self.K,
            "fit": None if self.fit is None else self.fit.to_dict(),
        }


def correlation_decay(
    sys: SkewSystem,
    m: EmpiricalMeasure,
    phi: Observable,
    psi: Observable,
    n_values: Sequence[int],
    n_samples: int,
    rng: np.random.Generator,
    *,
    n_boot: int = 200,
    oracle: bool = True,
) -> CorrelationSeries:
    """
    C_n = ∫(φ∘f^n)ψ dμ − ∫φ dμ∫ψ dμ from μ-distributed starts.

    The fit uses only the n where |C_n| exceeds three bootstrap standard
    errors. For observables of the base alone the exact correlations of the
    linear automorphism are attached as an oracle column.
    """
    ns = tuple(int(n) for n in n_values)
    if any(n < 0 for n in ns):
        raise ValueError("correlation lags must be >= 0")
    starts = draw(m, rng, n_samples)
    psi0 = psi(starts)
    psi_c = psi0 - psi0.mean()
    values = np.empty(len(ns))
    err = np.empty(len(ns))
    state = SkewState.from_points(starts)
    t = 0
    for i, n in sorted(enumerate(ns), key=lambda item: item[1]):
        state = advance(sys, state, n - t)
        t = n
        phin = phi(state.points)
        z = (phin - phin.mean()) * psi_c
        values[i] = float(z.mean())
        err[i] = bootstrap_stderr(z, rng, n_boot=n_boot)

    keep = above_noise(values, err, factor=NOISE_FACTOR)
    fit = None
    if int(keep.sum()) >= 2:
        fit = log_linear_fit(np.asarray(ns)[keep], np.abs(values[keep]), base=math.e)
        status = "ok"
    else:
        status = "mixing faster than resolution"

    exact = None
    if oracle and _base_only(phi) and _base_only(psi):
        exact = np.array([base_correlation(sys.base, phi, psi, n) for n in ns])
    logger.info("correlation_decay(%s, %s): %s", phi.tag, psi.tag, status)
    return CorrelationSeries(n_values=ns, values=values, stderr=err, fit=fit, status=status, oracle=exact)


def _base_only(obs: Observable) -> bool:
    return obs.kappa is None and obs.evaluator is None and all(t.k[2] == 0 for t in obs.terms)


def base_correlation(auto: ToralAutomorphism, phi: Observable, psi: Observable, n: int) -> float:
    """
    Exact Lebesgue correlation of two trigonometric base observables under A^n.

    cos(2π k·A^n x) = cos(2π (A^T)^n k·x), and two characters integrate to
    zero unless their frequencies agree up to sign.
    """
    if not (_base_only(phi) and _base_only(psi)):
        raise ValueError("base_correlation needs trigonometric observables of the base")
    if n < 0:
        raise ValueError("lag must be >= 0")
    (a11, a12), (a21, a22) = auto.matrix
    total = 0.0
    for a in phi.terms:
        # frequencies stay exact in Python integers
        p0, p1 = a.k[0], a.k[1]
        for _ in range(n):
            p0, p1 = a11 * p0 + a21 * p1, a12 * p0 + a22 * p1
        for b in psi.terms:
            q0, q1 = b.k[0], b.k[1]
            if (p0, p1) == (0, 0) or (q0, q1) == (0, 0):
                continue
            same = (p0, p1) == (q0, q1)
            flip = (p0, p1) == (-q0, -q1)
            if a.kind == "cos" and b.kind == "cos":
                total += a.coef * b.coef * 0.5 * (same + flip)
            elif a.kind == "sin" and b.kind == "sin":
                total += a.coef * b.coef * 0.5 * (same - flip)
    return float(total)


def within_envelope(series: CorrelationSeries, rate: float, *, const: float | None = None, factor: float = NOISE_FACTOR) -> bool:
    """|C_n| ≤ const·rate^n + factor·stderr at every lag."""
    ns = np.asarray(series.n_values, dtype=float)
    c0 = float(np.max(np.abs(series.values))) if const is None else float(const)
    bound = c0 * rate**ns + factor * series.stderr
    return bool(np.all(np.abs(series.values) <= bound + 1e-15))
