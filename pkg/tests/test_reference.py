# tests/test_reference.py
from __future__ import annotations

import numpy as np
import pytest

from skewlab.partition import builtin_cat_partition, enumerate_cylinders, locate
from skewlab.reference import (
    boundary_nullity,
    check_constant_jacobian,
    check_cs_invariance,
    cylinder_mass,
    overlap_equivalence,
    reference_measure,
    sample,
)
from skewlab.system import center_exponent, make_system
from skewlab.torus import CAT_MATRIX


def _setup(delta: float = 0.05):
    sys = make_system(CAT_MATRIX, kappa=0.5, delta=delta, alpha=0.0)
    return sys, builtin_cat_partition(sys.base)


def _centre_point(P, i: int, theta: float) -> np.ndarray:
    c = P.centres[i]
    return np.array([c[0], c[1], theta])


def test_reference_measure_on_a_plaque() -> None:
    sys, P = _setup()
    p = _centre_point(P, 0, 0.4)
    m = reference_measure(sys, P, p)

    assert m.index == 0
    assert m.length == pytest.approx(P.lu[0])
    assert m.marked == pytest.approx(p)

    pts = sample(sys, P, m, np.random.default_rng(0), 500)
    assert pts.shape == (500, 3)
    idx, _ = locate(P, pts[:, :2])
    assert np.all(idx == 0)


def test_cylinder_masses_match_widths() -> None:
    sys, P = _setup()
    i = 1
    m = reference_measure(sys, P, _centre_point(P, i, 0.1))

    cylinders = list(enumerate_cylinders(P, i, 4))
    masses = np.array([cylinder_mass(P, m, c) for c in cylinders])

    assert masses.sum() == pytest.approx(1.0, rel=1e-12)
    assert masses == pytest.approx([c.width / P.lu[i] for c in cylinders], rel=1e-9)
    assert cylinder_mass(P, m, (i,)) == 1.0
    assert cylinder_mass(P, m, ()) == 1.0


def test_cylinder_mass_rejects_foreign_words() -> None:
    sys, P = _setup()
    m = reference_measure(sys, P, _centre_point(P, 0, 0.1))

    with pytest.raises(ValueError, match="cylinder starts at"):
        cylinder_mass(P, m, (1, int(P.successors(1)[0])))

    bad = [j for j in range(P.k) if not P.transition[0, j]]
    with pytest.raises(ValueError, match="inadmissible word"):
        cylinder_mass(P, m, (0, bad[0]))


def test_constant_jacobian_matches_weights() -> None:
    sys, P = _setup()
    rng = np.random.default_rng(1)

    for i in range(min(P.k, 3)):
        for j in P.successors(i)[:2]:
            check = check_constant_jacobian(sys, P, i, int(j), 10, rng)
            assert check.n_plaques == 10
            assert check.spread < 1e-10
            assert check.mean == pytest.approx(check.weight, abs=1e-10)


def test_constant_jacobian_rejects_forbidden_transitions() -> None:
    sys, P = _setup()
    bad = [j for j in range(P.k) if not P.transition[0, j]]

    with pytest.raises(ValueError, match="not allowed"):
        check_constant_jacobian(sys, P, 0, bad[0], 5, np.random.default_rng(0))


def test_cs_invariance_on_the_product_system() -> None:
    sys, P = _setup(delta=0.0)
    i = int(np.argmax(P.lu * P.ls))
    x = _centre_point(P, i, 0.3)
    y = x.copy()
    y[:2] = y[:2] + 0.25 * P.ls[i] * np.asarray(P.auto.e_s)
    y[2] = 0.3

    stat = check_cs_invariance(sys, P, x, y, 2_000, np.random.default_rng(2))
    assert stat < 0.08


def test_cs_invariance_needs_one_rectangle() -> None:
    sys, P = _setup()

    with pytest.raises(ValueError, match="same rectangle"):
        check_cs_invariance(sys, P, _centre_point(P, 0, 0.1), _centre_point(P, 1, 0.1), 10, np.random.default_rng(0))


def test_boundary_nullity_scales_with_eps() -> None:
    sys, P = _setup()
    m = reference_measure(sys, P, _centre_point(P, 0, 0.1))

    frame = boundary_nullity(m, np.random.default_rng(3), 200_000)

    assert list(frame.columns) == ["eps", "fraction", "expected"]
    assert frame["fraction"].to_numpy() == pytest.approx(frame["expected"].to_numpy(), abs=0.005)
    assert frame["fraction"].is_monotonic_decreasing


def test_overlap_equivalence_is_exact() -> None:
    _, P = _setup()
    assert overlap_equivalence(P, 4) < 1e-9


def test_center_exponent_from_plaque_samples() -> None:
    # horizontal leaves settle on the attracting fixed fiber θ = 0
    sys, P = _setup(delta=0.0)
    rng = np.random.default_rng(8)
    start = sample(sys, P, reference_measure(sys, P, _centre_point(P, 0, 0.3)), rng, 200)

    exp = center_exponent(sys, rng, 200, 200, start=start)

    assert exp.fiber == pytest.approx(np.log(0.5), abs=1e-6)
    assert exp.mostly_contracting
    assert exp.n_samples == 200
