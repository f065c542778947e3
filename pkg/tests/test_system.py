# tests/test_system.py
from __future__ import annotations

import numpy as np
import pytest

from skewlab.partition import builtin_cat_partition
from skewlab.system import (
    SkewState,
    advance,
    apply,
    center_exponent,
    check_standing,
    cross_section,
    cs_holonomy,
    cs_norm,
    fiber_derivative,
    fiber_inverse,
    fiber_map,
    leaf_fiber,
    leaf_segment,
    make_system,
    plaque_projection_error,
    plaque_points,
    section_at,
    section_hit,
    unstable_holonomy,
    validate_system,
)
from skewlab.torus import CAT_MATRIX, apply_auto, cat_map, torus_distance


def _coupled(**kw):
    return make_system(CAT_MATRIX, kappa=0.5, delta=0.05, alpha=0.0, **kw)


def _product():
    return make_system(CAT_MATRIX, kappa=0.5, delta=0.0, alpha=0.0)


def _circle_gap(a, b) -> np.ndarray:
    d = np.asarray(a) - np.asarray(b)
    return np.abs(d - np.round(d))


def test_make_system_properties() -> None:
    sys = _coupled()

    assert sys.lambda_u == pytest.approx(cat_map().lambda_u)
    assert sys.contraction_ratio == pytest.approx(1.5 / sys.lambda_u)
    assert sys.omega == pytest.approx(1.5 / sys.lambda_u)
    assert 0 < sys.leaf_lipschitz < 1
    assert _product().leaf_lipschitz == 0.0
    assert sys.to_dict()["kappa"] == 0.5


def test_fiber_derivative_and_cs_norm() -> None:
    sys = _coupled()

    assert fiber_derivative(sys, 0.0) == pytest.approx(0.5)
    assert fiber_derivative(sys, 0.5) == pytest.approx(1.5)
    assert cs_norm(sys, 0.0) == pytest.approx(0.5)
    # the stable lift wins where the fiber contracts harder
    strong = make_system(CAT_MATRIX, kappa=0.9, delta=0.0, alpha=0.0)
    assert cs_norm(strong, 0.0) == pytest.approx(strong.base.lambda_s)


def test_fiber_inverse_round_trip() -> None:
    sys = _coupled()
    rng = np.random.default_rng(0)
    x1 = rng.random(500)
    theta = rng.random(500)

    back = fiber_inverse(sys, x1, fiber_map(sys, x1, theta))
    assert np.max(_circle_gap(back, theta)) < 1e-12


def test_fiber_inverse_requires_diffeo() -> None:
    sys = make_system(CAT_MATRIX, kappa=1.0, delta=0.0, alpha=0.0)
    with pytest.raises(ValueError, match="fiber not diffeo"):
        fiber_inverse(sys, 0.1, 0.2)


def test_check_standing_rejects_bad_parameters() -> None:
    with pytest.raises(ValueError, match="fiber not diffeo"):
        check_standing(make_system(CAT_MATRIX, kappa=1.5, delta=0.0, alpha=0.0))
    with pytest.raises(ValueError, match="not partially hyperbolic"):
        check_standing(make_system([[1, 1], [1, 0]], kappa=0.7, delta=0.0, alpha=0.0))
    with pytest.raises(ValueError, match="delta"):
        check_standing(make_system(CAT_MATRIX, kappa=0.5, delta=-0.1, alpha=0.0))

    check_standing(_coupled())


def test_apply_base_is_exact() -> None:
    sys = _coupled()
    rng = np.random.default_rng(1)
    p = np.column_stack([rng.random((40, 2)), rng.random(40)])

    out = apply(sys, p, 7)
    assert out.shape == p.shape
    assert np.array_equal(out[:, :2], apply_auto(sys.base, p[:, :2], 7))


def test_apply_forward_then_back() -> None:
    sys = _coupled()
    rng = np.random.default_rng(2)
    p = np.column_stack([rng.random((40, 2)), rng.random(40)])

    back = apply(sys, apply(sys, p, 5), -5)
    assert np.max(torus_distance(back[:, :2], p[:, :2])) < 1e-10
    assert np.max(_circle_gap(back[:, 2], p[:, 2])) < 1e-9


def test_advance_respects_max_iterate() -> None:
    sys = _coupled(max_iterate=5)
    state = SkewState.from_points([[0.1, 0.2, 0.3]])
    with pytest.raises(ValueError, match="exceeds max_iterate"):
        advance(sys, state, 6)


def test_skew_points_need_three_coordinates() -> None:
    with pytest.raises(ValueError, match="x1, x2, theta"):
        apply(_coupled(), [[0.1, 0.2]], 1)


def test_leaf_fiber_through_the_marked_point() -> None:
    sys = _coupled()
    p = np.array([0.31, 0.27, 0.8])

    assert leaf_fiber(sys, p, 0.0) == pytest.approx(0.8, abs=1e-15)


def test_product_leaves_are_horizontal() -> None:
    sys = _product()
    p = np.array([0.31, 0.27, 0.8])

    out = leaf_fiber(sys, p, np.linspace(-0.1, 0.1, 9))
    assert np.allclose(out, 0.8)


def test_leaf_fiber_converges_in_depth() -> None:
    sys = _coupled()
    rng = np.random.default_rng(3)
    p = np.column_stack([rng.random((30, 2)), rng.random(30)])
    t = rng.uniform(-0.1, 0.1, 30)

    shallow = leaf_fiber(sys, p, t, 25)
    deep = leaf_fiber(sys, p, t, 40)
    allowed = sys.truncation_bound(t, 25) + sys.truncation_bound(t, 40) + 1e-12
    assert np.all(_circle_gap(shallow, deep) <= allowed)


def test_leaf_fiber_is_lipschitz() -> None:
    sys = _coupled()
    p = np.array([0.42, 0.13, 0.35])
    t = np.linspace(-0.1, 0.1, 41)

    phi = leaf_fiber(sys, p, t)
    slopes = _circle_gap(phi[1:], phi[:-1]) / np.diff(t)
    assert np.all(slopes <= sys.leaf_lipschitz + 1e-6)


def test_leaf_fiber_depth_budget() -> None:
    sys = _coupled(max_backward=10)
    with pytest.raises(ValueError, match="depth budget"):
        leaf_fiber(sys, [0.1, 0.2, 0.3], 0.05, 11)


def test_unstable_holonomy_checks() -> None:
    sys = _coupled()
    p = np.array([0.42, 0.13, 0.35])
    e_u = np.asarray(sys.base.e_u)
    e_s = np.asarray(sys.base.e_s)

    y = p[:2] + 0.05 * e_u
    value = unstable_holonomy(sys, p, y)
    assert value.error_bound <= sys.holonomy_tol
    assert value.theta == pytest.approx(leaf_fiber(sys, p, 0.05))

    with pytest.raises(ValueError, match="not on the local unstable line"):
        unstable_holonomy(sys, p, p[:2] + 0.01 * e_s)
    with pytest.raises(ValueError, match="increase depth"):
        unstable_holonomy(sys, p, y, 2, tol=1e-15)


def test_validate_system_passes_for_coupled() -> None:
    report = validate_system(_coupled(), np.random.default_rng(4), n_samples=100)

    assert report.passed, report.to_dict()
    assert report.lipschitz_violations == 0
    assert report.to_dict()["h1"] is True


def test_validate_system_samples_plaque_projection() -> None:
    sys = _coupled()
    P = builtin_cat_partition(sys.base)

    report = validate_system(sys, np.random.default_rng(6), P=P, n_samples=50)

    assert report.h1
    assert report.h2 is True
    assert report.h2_error < 1e-9
    assert report.passed, report.to_dict()
    assert validate_system(sys, np.random.default_rng(6), n_samples=50).to_dict()["h2"] is None


def test_plaque_projection_detects_a_foreign_partition() -> None:
    # leaves of another automorphism do not run along the cat map plaques
    sys = make_system([[3, 2], [1, 1]], kappa=0.5, delta=0.05, alpha=0.0)
    P = builtin_cat_partition(cat_map())

    _, error = plaque_projection_error(sys, P, np.random.default_rng(7), n_samples=50)
    assert error > 1e-3

    report = validate_system(sys, np.random.default_rng(7), P=P, n_samples=50)
    assert report.h2 is False
    assert not report.passed


def test_validate_system_rejects_kappa_out_of_range() -> None:
    with pytest.raises(ValueError, match="fiber not diffeo"):
        validate_system(make_system(CAT_MATRIX, kappa=1.5, delta=0.0, alpha=0.0))


def test_center_exponent_signs() -> None:
    rng = np.random.default_rng(5)
    coupled = center_exponent(_coupled(), rng, 200, 200)
    assert coupled.fiber < -0.3
    assert coupled.mostly_contracting
    assert coupled.stable_lift == pytest.approx(-np.log(cat_map().lambda_u))

    rotation = make_system(CAT_MATRIX, kappa=0.0, delta=0.0, alpha=0.6180339887498949)
    flat = center_exponent(rotation, rng, 50, 50)
    assert flat.fiber == 0.0
    assert not flat.mostly_contracting


def test_leaf_segments_and_sections() -> None:
    sys = _coupled()
    P = builtin_cat_partition(sys.base)
    i = 0
    centre = P.centres[i]
    p = np.array([[centre[0], centre[1], 0.25]])

    leaf = leaf_segment(sys, P, p)
    assert leaf.index.tolist() == [i]
    assert leaf.position[0] == pytest.approx(0.5 * P.lu[i])
    assert leaf.truncation_error_bound(sys) < 1e-6

    pts = plaque_points(sys, P, leaf, leaf.position)
    assert torus_distance(pts[0, :2], centre) < 1e-12
    assert _circle_gap(pts[0, 2], 0.25) < 1e-12

    S = cross_section(P, centre)
    assert S.index == i
    assert S.position == pytest.approx(0.5 * P.lu[i])
    hit = section_hit(sys, P, S, leaf)
    assert hit.shape == (1, 3)
    assert _circle_gap(hit[0, 2], 0.25) < 1e-12

    S2 = section_at(P, i, 0.25 * P.lu[i])
    hit2 = section_hit(sys, P, S2, leaf)
    assert _circle_gap(hit2[0, 2], leaf_fiber(sys, p[0], -0.25 * P.lu[i])) < 1e-12


def test_section_requires_an_interior_anchor() -> None:
    P = builtin_cat_partition(cat_map())
    with pytest.raises(ValueError, match="ambiguous plaque"):
        cross_section(P, P.rectangles[0].anchor)


def test_section_hit_rejects_other_rectangles() -> None:
    sys = _coupled()
    P = builtin_cat_partition(sys.base)
    leaf = leaf_segment(sys, P, [[P.centres[1][0], P.centres[1][1], 0.1]])

    with pytest.raises(ValueError, match="leaf not in rectangle"):
        section_hit(sys, P, cross_section(P, P.centres[0]), leaf)


def test_cs_holonomy_keeps_the_fiber_of_y_for_products() -> None:
    sys = _product()
    P = builtin_cat_partition(sys.base)
    c = P.centres[0]
    e_u = np.asarray(sys.base.e_u)
    e_s = np.asarray(sys.base.e_s)
    du, ds = 0.25 * P.lu[0], 0.25 * P.ls[0]
    x = np.array([c[0], c[1], 0.1])
    y = np.array([*(c + ds * e_s), 0.6])
    z = np.array([*(c + du * e_u), 0.3])

    out = cs_holonomy(sys, P, x, y, z)
    assert out.shape == (3,)
    assert _circle_gap(out[2], 0.6) < 1e-12
    # base is W^u(y) ∩ W^s(z): y shifted by z's unstable coordinate
    assert torus_distance(out[:2], c + ds * e_s + du * e_u) < 1e-12
