# tests/test_hitting.py
from __future__ import annotations

import numpy as np
import pytest

from skewlab.gibbs import EmpiricalMeasure
from skewlab.hitting import (
    STATUS_CONVERGED,
    STATUS_INSUFFICIENT,
    STATUS_OK,
    HitSet,
    HittingSeries,
    center_atom_probe,
    check_holonomy_invariance,
    estimate_transverse,
    first_hit_depth,
    hit_exact,
    hit_mc,
    hitting_series,
    holonomy_translate,
    rate_fit,
    transverse_average,
    with_fit,
)
from skewlab.observables import observable
from skewlab.partition import builtin_cat_partition, cylinder_count
from skewlab.reference import reference_measure
from skewlab.system import cross_section, fiber_map, make_system
from skewlab.torus import CAT_MATRIX


def _setup(delta: float = 0.05):
    sys = make_system(CAT_MATRIX, kappa=0.5, delta=delta, alpha=0.0)
    return sys, builtin_cat_partition(sys.base)


def _start(sys, P, i: int = 0, theta: float = 0.25):
    c = P.centres[i]
    return reference_measure(sys, P, [c[0], c[1], theta])


def _reachable_depth(P, i: int, j: int, lo: int = 4) -> int:
    return next(n for n in range(lo, lo + 8) if cylinder_count(P, i, n, end=j) > 0)


def _series(averages, stderr) -> HittingSeries:
    n = np.arange(1, len(averages) + 1, dtype=float)
    return HittingSeries(
        n_values=n,
        averages=np.asarray(averages, dtype=float),
        stderr=np.asarray(stderr, dtype=float),
        counts=np.ones(len(averages)),
        method=("exact",) * len(averages),
    )


def _uniform_cloud(rng: np.random.Generator, n: int, theta) -> EmpiricalMeasure:
    pts = rng.random((n, 3))
    pts[:, 2] = theta
    return EmpiricalMeasure.uniform(pts)


def test_first_hit_depth() -> None:
    _, P = _setup()
    i = 0
    j = next(int(j) for j in P.successors(i) if j != i)

    assert first_hit_depth(P, i, i) == 0
    assert first_hit_depth(P, i, j) == 1


def test_empty_hit_set_has_no_average() -> None:
    with pytest.raises(ValueError, match="below first-hit depth"):
        HitSet(n=3, points=np.empty((0, 3)), values=np.empty(0)).average


def test_exact_hits_on_the_product_system_follow_the_fiber_map() -> None:
    sys, P = _setup(delta=0.0)
    start = _start(sys, P, theta=0.25)
    j = int(P.successors(0)[0])
    S = cross_section(P, P.centres[j])
    n = _reachable_depth(P, 0, j)

    hits = hit_exact(sys, P, start, S, n, observable("cos_theta"))

    theta = 0.25
    for _ in range(n):
        theta = float(fiber_map(sys, 0.0, theta))
    assert len(hits) == cylinder_count(P, 0, n, end=j)
    assert hits.values == pytest.approx(np.full(len(hits), np.cos(2 * np.pi * theta)), abs=1e-9)
    assert hits.points[:, 2] == pytest.approx(np.full(len(hits), theta), abs=1e-9)


def test_monte_carlo_agrees_with_enumeration() -> None:
    sys, P = _setup()
    start = _start(sys, P, theta=0.3)
    j = int(P.successors(0)[0])
    S = cross_section(P, P.centres[j])
    n = _reachable_depth(P, 0, j, lo=5)
    phi = observable("cos_theta")

    exact = hit_exact(sys, P, start, S, n, phi)
    mc = hit_mc(sys, P, start, S, n, 20_000, np.random.default_rng(0), phi)

    assert mc.landed > 0
    assert abs(mc.average - exact.average) <= 5.0 * mc.stderr + 1e-6


def test_hitting_series_frame_and_errors() -> None:
    sys, P = _setup()
    start = _start(sys, P)
    j = int(P.successors(0)[0])
    S = cross_section(P, P.centres[j])
    n = _reachable_depth(P, 0, j)
    rng = np.random.default_rng(1)

    series = hitting_series(sys, P, start, S, observable("cos_theta"), rng, exact_n=[n, n + 1], mc_n=[n + 1], n_samples=2_000)
    frame = series.to_frame()

    assert list(frame.columns) == ["n", "method", "count", "average", "stderr"]
    assert frame["method"].tolist() == ["exact", "exact", "monte-carlo"]
    assert frame["stderr"].iloc[0] == 0.0

    other = cross_section(P, P.centres[1])
    with pytest.raises(ValueError, match="below first-hit depth"):
        hitting_series(sys, P, start, other, observable("cos_theta"), rng, exact_n=[0])


def test_rate_fit_statuses() -> None:
    n = np.arange(1, 9)
    decaying = _series(0.5 + 10.0 ** (-0.3 * n), np.zeros(8))

    fit = rate_fit(decaying, 0.5)
    assert fit.status == STATUS_OK
    assert fit.slope == pytest.approx(-0.3)
    assert fit.n_points == 8

    assert rate_fit(_series(np.full(8, 0.5), np.zeros(8)), 0.5).status == STATUS_CONVERGED

    noisy = _series(0.5 + 10.0 ** (-0.3 * n), [0.0, 0.0, 0.0] + [1.0] * 5)
    short = rate_fit(noisy, 0.5)
    assert short.status == STATUS_INSUFFICIENT
    assert short.n_points == 3

    fitted = with_fit(decaying, 0.5)
    assert fitted.limit_estimate == 0.5
    assert fitted.rate_fit is not None
    assert fitted.rate_fit.to_dict()["status"] == STATUS_OK


def test_transverse_estimate_of_a_uniform_cloud() -> None:
    sys, P = _setup(delta=0.0)
    rng = np.random.default_rng(2)
    m = _uniform_cloud(rng, 20_000, 0.4)
    j = int(np.argmax(P.lu * P.ls))
    S = cross_section(P, P.centres[j])

    est = estimate_transverse(sys, P, m, S)

    assert est.total_mass == pytest.approx(P.area(j), abs=0.02)
    assert est.scale == pytest.approx(1.0 / P.lu[j])
    assert est.coords.shape == (len(est), 2)
    assert est.coords[:, 1] == pytest.approx(np.full(len(est), 0.4))

    mean, _ = transverse_average(est, observable("cos_theta"), rng)
    assert mean == pytest.approx(np.cos(2 * np.pi * 0.4))


def test_holonomy_translate_of_a_section_to_itself() -> None:
    _, P = _setup()
    j = int(np.argmax(P.lu * P.ls))
    S = cross_section(P, P.centres[j])

    t, ds, (lo, hi) = holonomy_translate(P, S, S, budget=2.0)

    assert t == pytest.approx(0.0, abs=1e-12)
    assert ds == pytest.approx(0.0, abs=1e-12)
    assert lo == pytest.approx(-0.5 * S.length)
    assert hi == pytest.approx(0.5 * S.length)


def test_holonomy_check_detects_a_scale_fault() -> None:
    sys, P = _setup()
    rng = np.random.default_rng(3)
    m = _uniform_cloud(rng, 20_000, rng.random(20_000))
    j = int(np.argmax(P.lu * P.ls))
    est = estimate_transverse(sys, P, m, cross_section(P, P.centres[j]))

    clean = check_holonomy_invariance(sys, P, est, est)
    assert clean.ks == pytest.approx(0.0, abs=1e-12)
    assert clean.mean_ratio == pytest.approx(1.0)
    assert clean.n_pushed == clean.n_target == len(est)

    faulty = check_holonomy_invariance(sys, P, est, est, fault=1.5)
    assert faulty.mean_ratio == pytest.approx(1.5)
    assert all(r == pytest.approx(1.5) for r in faulty.ratios)
    assert faulty.to_dict()["mean_ratio"] == faulty.mean_ratio


def test_center_atom_probe_finds_atoms() -> None:
    sys, P = _setup(delta=0.0)
    rng = np.random.default_rng(4)
    j = int(np.argmax(P.lu * P.ls))
    anchor = P.centres[j]

    atoms = _uniform_cloud(rng, 50_000, rng.choice([0.1, 0.6], size=50_000))
    probe = center_atom_probe(sys, P, atoms, anchor)
    assert probe.count == 2
    assert sorted(probe.centres) == pytest.approx([0.1, 0.6])
    assert not probe.diffuse
    assert probe.status == STATUS_OK

    spread = _uniform_cloud(rng, 50_000, rng.random(50_000))
    diffuse = center_atom_probe(sys, P, spread, anchor)
    assert diffuse.diffuse
    assert diffuse.to_dict()["status"] == "no atomic structure"


def test_center_atom_probe_needs_particles() -> None:
    sys, P = _setup(delta=0.0)
    sparse = _uniform_cloud(np.random.default_rng(5), 100, 0.2)

    with pytest.raises(ValueError, match="too few particles"):
        center_atom_probe(sys, P, sparse, P.centres[0])
