# tests/test_torus.py
from __future__ import annotations

import math

import numpy as np
import pytest

from skewlab.torus import (
    CAT_MATRIX,
    apply_auto,
    apply_grid,
    bracket,
    cat_map,
    eigen_coords,
    eigen_data,
    from_eigen_coords,
    matrix_power_mod,
    shortest_lift,
    to_grid,
    torus_distance,
    wrap,
)


def test_cat_map_eigen_data() -> None:
    auto = cat_map()

    golden = (3.0 + math.sqrt(5.0)) / 2.0
    assert auto.matrix == CAT_MATRIX
    assert auto.det == 1
    assert auto.lambda_u == pytest.approx(golden, rel=1e-14)
    assert auto.lambda_s == pytest.approx(1.0 / golden, rel=1e-14)
    assert auto.trace == 3

    # e_u, e_s are unit eigenvectors with a positive leading component
    a = auto.array
    for mu, e in ((auto.mu_u, auto.e_u), (auto.mu_s, auto.e_s)):
        v = np.asarray(e)
        assert np.linalg.norm(v) == pytest.approx(1.0)
        assert v[0] > 0
        assert np.allclose(a @ v, mu * v, atol=1e-14)

    assert np.allclose(auto.basis @ auto.inverse_basis, np.eye(2))
    assert auto.to_dict()["matrix"] == [[2, 1], [1, 1]]


@pytest.mark.parametrize(
    "matrix",
    [
        [[1, 1], [0, 1]],  # parabolic
        [[2, 0], [0, 1]],  # det 2
        [[0, 1], [-1, 0]],  # rotation
        [[1, 0], [0, 1]],
    ],
)
def test_eigen_data_rejects_non_anosov(matrix: list[list[int]]) -> None:
    with pytest.raises(ValueError, match="not Anosov"):
        eigen_data(matrix)


def test_eigen_data_rejects_bad_shapes_and_entries() -> None:
    with pytest.raises(ValueError, match="2x2"):
        eigen_data([[2, 1, 0], [1, 1, 0]])
    with pytest.raises(ValueError, match="integers"):
        eigen_data([[2.5, 1], [1, 1]])


def test_orientation_reversing_matrix_is_accepted() -> None:
    auto = eigen_data([[1, 1], [1, 0]])

    assert auto.det == -1
    assert auto.lambda_u == pytest.approx((1.0 + math.sqrt(5.0)) / 2.0)
    assert auto.mu_s < 0


def test_wrap_lands_in_unit_interval() -> None:
    out = wrap([-1e-18, 1.0, 2.75, -0.25])

    assert np.all(out >= 0.0)
    assert np.all(out < 1.0)
    assert out[1] == 0.0
    assert out[2] == pytest.approx(0.75)
    assert out[3] == pytest.approx(0.75)


def test_wrap_rejects_non_finite() -> None:
    with pytest.raises(ValueError, match="non-finite"):
        wrap([0.1, float("nan")])


def test_shortest_lift_and_distance() -> None:
    d = shortest_lift([0.9, -0.7])
    assert d == pytest.approx([-0.1, 0.3])

    assert torus_distance([0.05, 0.5], [0.95, 0.5]) == pytest.approx(0.1)


def test_eigen_coords_round_trip() -> None:
    auto = cat_map()
    base = np.array([0.3, 0.6])
    us = np.array([0.05, -0.02])

    p = from_eigen_coords(auto, base, us)
    assert eigen_coords(auto, base, p) == pytest.approx(us, abs=1e-14)


def test_matrix_power_mod_inverse() -> None:
    auto = cat_map()
    fwd = np.array(matrix_power_mod(auto, 7), dtype=object)
    back = np.array(matrix_power_mod(auto, -7), dtype=object)

    prod = (fwd @ back) % (1 << 64)
    assert prod.tolist() == [[1, 0], [0, 1]]


def test_apply_grid_is_exact() -> None:
    auto = cat_map()
    rng = np.random.default_rng(3)
    z = to_grid(rng.random((50, 2)))

    stepped = z
    for _ in range(5):
        stepped = apply_grid(auto, stepped, 1)

    assert np.array_equal(stepped, apply_grid(auto, z, 5))
    assert np.array_equal(apply_grid(auto, stepped, -5), z)


def test_apply_auto_matches_matrix_action() -> None:
    auto = cat_map()
    p = np.array([[0.1, 0.2], [0.7, 0.35]])

    out = apply_auto(auto, p, 1)
    expect = wrap(p @ auto.array.T)
    assert out.shape == p.shape
    assert np.max(torus_distance(out, expect)) < 1e-14


def test_apply_auto_inverse_within_float_error() -> None:
    auto = cat_map()
    rng = np.random.default_rng(11)
    p = rng.random((20, 2))

    back = apply_auto(auto, apply_auto(auto, p, 5), -5)
    assert np.max(torus_distance(back, p)) < 1e-10


def test_apply_auto_respects_max_iterate() -> None:
    auto = cat_map()
    with pytest.raises(ValueError, match="exceeds max_iterate"):
        apply_auto(auto, [0.1, 0.2], 11, max_iterate=10)
    with pytest.raises(ValueError, match="exceeds max_iterate"):
        apply_auto(auto, [0.1, 0.2], -11, max_iterate=10)


def test_bracket_lies_on_both_leaves() -> None:
    auto = cat_map()
    a = np.array([0.40, 0.52])
    b = np.array([0.47, 0.44])

    q = bracket(auto, a, b)

    # q - a is along e_u, q - b along e_s
    qa = eigen_coords(auto, a, q)
    qb = eigen_coords(auto, b, q)
    assert abs(qa[1]) < 1e-13
    assert abs(qb[0]) < 1e-13


def test_bracket_of_a_point_with_itself() -> None:
    auto = cat_map()
    a = np.array([0.25, 0.75])

    assert bracket(auto, a, a) == pytest.approx(wrap(a))


def test_bracket_takes_the_unstable_leaf_from_its_first_argument() -> None:
    auto = cat_map()
    a = np.array([0.40, 0.52])
    b = np.array([0.47, 0.44])

    q = bracket(auto, a, b)
    swapped = bracket(auto, b, a)

    assert abs(eigen_coords(auto, b, swapped)[1]) < 1e-13
    assert abs(eigen_coords(auto, a, swapped)[0]) < 1e-13
    assert torus_distance(q, swapped) > 1e-3


def test_bracket_rejects_far_points_and_bad_scale() -> None:
    auto = cat_map()
    with pytest.raises(ValueError, match="no local bracket"):
        bracket(auto, [0.1, 0.1], [0.3, 0.1], scale=0.1)
    with pytest.raises(ValueError, match="scale"):
        bracket(auto, [0.1, 0.1], [0.1, 0.1], scale=0.75)
