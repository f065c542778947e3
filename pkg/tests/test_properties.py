# tests/test_properties.py
from __future__ import annotations

import math

import numpy as np
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from skewlab.estimators import circular_clusters, log_linear_fit, wilson_interval
from skewlab.observables import catalog_names, observable
from skewlab.runtime import parse_seed, split_counts
from skewlab.system import fiber_derivative, fiber_inverse, fiber_map, make_system
from skewlab.torus import CAT_MATRIX, apply_grid, bracket, cat_map, eigen_coords, torus_distance, wrap

unit = st.floats(min_value=0.0, max_value=1.0, allow_nan=False, allow_infinity=False, exclude_max=True)
coord = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False)


@given(coord)
@settings(max_examples=500)
def test_wrap_lands_in_the_unit_interval(x: float) -> None:
    w = float(wrap(x))
    assert 0.0 <= w < 1.0


@given(unit, unit, unit, unit)
@settings(max_examples=300)
def test_torus_distance_is_symmetric_and_bounded(a1: float, a2: float, b1: float, b2: float) -> None:
    d = float(torus_distance([a1, a2], [b1, b2]))

    assert d == float(torus_distance([b1, b2], [a1, a2]))
    assert 0.0 <= d <= math.sqrt(0.5) + 1e-15


@given(
    st.floats(min_value=0.0, max_value=0.9),
    st.floats(min_value=0.0, max_value=0.3),
    unit,
    unit,
)
@settings(max_examples=300, deadline=None)
def test_fiber_inverse_undoes_the_fiber_map(kappa: float, delta: float, x1: float, theta: float) -> None:
    sys = make_system(CAT_MATRIX, kappa=kappa, delta=delta, alpha=0.1)

    back = float(fiber_inverse(sys, x1, fiber_map(sys, x1, theta)))
    gap = back - theta
    assert abs(gap - round(gap)) < 1e-10


@given(st.floats(min_value=0.0, max_value=0.99), unit)
@settings(max_examples=300)
def test_fiber_derivative_stays_in_band(kappa: float, theta: float) -> None:
    sys = make_system(CAT_MATRIX, kappa=kappa, delta=0.0, alpha=0.0)
    d = float(fiber_derivative(sys, theta))

    assert 1.0 - kappa - 1e-15 <= d <= 1.0 + kappa + 1e-15


@given(st.integers(min_value=0, max_value=10**7), st.integers(min_value=1, max_value=64))
@settings(max_examples=300)
def test_split_counts_is_balanced(total: int, chunks: int) -> None:
    counts = split_counts(total, chunks)

    assert len(counts) == chunks
    assert sum(counts) == total
    assert max(counts) - min(counts) <= 1


@given(st.integers(min_value=0, max_value=2**64 - 1))
@settings(max_examples=300)
def test_seed_spellings_agree(n: int) -> None:
    assert parse_seed(n) == n
    assert parse_seed(str(n)) == n
    assert parse_seed(hex(n)) == n


@given(st.integers(min_value=1, max_value=10_000), st.data())
@settings(max_examples=300)
def test_wilson_interval_brackets_the_estimate(trials: int, data: st.DataObject) -> None:
    k = data.draw(st.integers(min_value=0, max_value=trials))
    p = wilson_interval(k, trials)

    assert -1e-12 <= p.low <= p.value + 1e-12
    assert p.value - 1e-12 <= p.high <= 1.0 + 1e-12


@given(st.lists(unit, min_size=1, max_size=200), st.floats(min_value=1e-4, max_value=0.2))
@settings(max_examples=200)
def test_clusters_partition_the_sample(theta: list[float], eps: float) -> None:
    clusters = circular_clusters(theta, eps=eps)

    assert sum(c.count for c in clusters) == len(theta)
    assert all(0.0 <= c.centre < 1.0 for c in clusters)


@given(st.floats(min_value=-2.0, max_value=2.0), st.floats(min_value=-3.0, max_value=3.0))
@settings(max_examples=200)
def test_log_linear_fit_is_exact_on_exponentials(slope: float, intercept: float) -> None:
    n = np.arange(1, 9, dtype=float)
    fit = log_linear_fit(n, 10.0 ** (intercept + slope * n))

    assert abs(fit.slope - slope) < 1e-9
    assert abs(fit.intercept - intercept) < 1e-9


@given(
    st.integers(min_value=0, max_value=2**64 - 1),
    st.integers(min_value=0, max_value=2**64 - 1),
    st.integers(min_value=-500, max_value=500),
)
@settings(max_examples=300)
def test_grid_automorphism_inverts_exactly(z1: int, z2: int, n: int) -> None:
    auto = cat_map()
    z = np.array([[z1, z2]], dtype=np.uint64)

    assert np.array_equal(apply_grid(auto, apply_grid(auto, z, n), -n), z)


@given(
    unit,
    unit,
    st.floats(min_value=-0.2, max_value=0.2),
    st.floats(min_value=-0.2, max_value=0.2),
)
@settings(max_examples=300)
def test_bracket_sits_on_both_leaves(a1: float, a2: float, d1: float, d2: float) -> None:
    auto = cat_map()
    a = np.array([a1, a2])
    b = wrap(a + np.array([d1, d2]))

    q = bracket(auto, a, b)

    assert abs(eigen_coords(auto, a, q)[1]) < 1e-12
    assert abs(eigen_coords(auto, b, q)[0]) < 1e-12


@given(
    st.sampled_from([name for name in catalog_names() if name != "one"]),
    st.floats(min_value=0.3, max_value=1.0),
    st.lists(unit, min_size=6, max_size=6),
)
@settings(max_examples=300, deadline=None)
def test_trig_observables_respect_their_holder_seminorm(name: str, gamma: float, coords: list[float]) -> None:
    obs = observable(name, gamma=gamma)
    p = np.array(coords[:3])
    q = np.array(coords[3:])
    step = q - p
    d = float(np.linalg.norm(step - np.round(step)))
    assume(d > 1e-9)

    gap = abs(float(obs(p)) - float(obs(q)))
    assert gap <= obs.seminorm * d**gamma * (1.0 + 1e-6) + 1e-12
