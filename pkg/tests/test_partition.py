# tests/test_partition.py
from __future__ import annotations

import numpy as np
import pytest

from skewlab.partition import (
    builtin_cat_partition,
    chart_point,
    cylinder_count,
    cylinder_table,
    enumerate_cylinders,
    itinerary,
    locate,
    partition_from_rectangles,
    perron_eigenvalue,
    rectangle_frame,
    require_markov,
    stable_boundary_distance,
    stable_plaque,
    transition_frame,
    unstable_plaque,
    verify_markov,
    word_map,
)
from skewlab.torus import cat_map, eigen_data, torus_distance


def _partition():
    return builtin_cat_partition(cat_map())


def test_builtin_partition_passes_verification() -> None:
    P = _partition()
    report = verify_markov(P, 20_000, np.random.default_rng(0))

    assert report.passed, report.to_dict()
    assert report.violations == 0
    assert report.area_error < 1e-9
    assert report.perron == pytest.approx(P.auto.lambda_u, abs=1e-8)


def test_unrefined_partition_is_rejected_for_diameter() -> None:
    P = builtin_cat_partition(cat_map(), refine=0)
    report = verify_markov(P, 2_000, np.random.default_rng(1))

    assert P.k == 2
    assert report.diameter > 0
    assert not report.passed


def test_builtin_requires_cat_matrix() -> None:
    with pytest.raises(ValueError, match="builtin partition requires"):
        builtin_cat_partition(eigen_data([[3, 1], [2, 1]]))
    with pytest.raises(ValueError, match="refine"):
        builtin_cat_partition(cat_map(), refine=-1)


def test_partition_geometry() -> None:
    P = _partition()

    assert sum(P.area(i) for i in range(P.k)) == pytest.approx(1.0, abs=1e-9)
    assert np.allclose(P.weights.sum(axis=1), 1.0)
    assert np.all((P.weights > 0) == (P.transition > 0))
    assert P.scale == pytest.approx(1.0 / P.auto.mu_u)
    for i in range(P.k):
        assert P.circumradius(i) < 0.25
        assert len(P.successors(i)) > 0


def test_locate_and_charts() -> None:
    P = _partition()

    for i in range(P.k):
        idx, interior = locate(P, P.centres[i])
        assert idx == i
        assert interior is True
        assert torus_distance(chart_point(P, i, 0.0, 0.0), P.centres[i]) < 1e-12

    idx, interior = locate(P, P.centres[:3])
    assert idx.tolist() == [0, 1, 2]
    assert interior.all()

    dist = stable_boundary_distance(P, P.centres)
    assert dist == pytest.approx(0.5 * P.lu)


def test_rectangle_corner_is_ambiguous() -> None:
    P = _partition()
    corner = P.rectangles[0].anchor

    _, interior = locate(P, corner)
    assert interior is False
    with pytest.raises(ValueError, match="ambiguous plaque"):
        unstable_plaque(P, corner)
    with pytest.raises(ValueError, match="ambiguous plaque"):
        stable_plaque(P, corner)


def test_plaques_through_a_centre() -> None:
    P = _partition()
    i = P.k - 1
    u = unstable_plaque(P, P.centres[i])
    s = stable_plaque(P, P.centres[i])

    assert u.index == s.index == i
    assert u.position == pytest.approx(0.5 * P.rectangles[i].lu)
    assert s.position == pytest.approx(0.5 * P.rectangles[i].ls)
    assert torus_distance(u.point(u.position), P.centres[i]) < 1e-12
    assert torus_distance(s.point(s.position), P.centres[i]) < 1e-12


def test_perron_eigenvalue_simple_matrices() -> None:
    golden = np.array([[1, 1], [1, 0]])
    assert perron_eigenvalue(golden) == pytest.approx((1 + 5**0.5) / 2)

    with pytest.raises(ValueError, match="nilpotent"):
        perron_eigenvalue(np.array([[0, 1], [0, 0]]))


def test_cylinder_tables_tile_the_plaque() -> None:
    P = _partition()
    i, n = 0, 5
    table = cylinder_table(P, i, n)

    assert len(table) == cylinder_count(P, i, n)
    assert table.width.sum() == pytest.approx(P.lu[i], rel=1e-9)
    assert np.array_equal(table.find(table.midpoints()), np.arange(len(table)))

    streamed = list(enumerate_cylinders(P, i, n))
    assert len(streamed) == len(table)
    assert np.allclose([c.offset for c in streamed], table.offset)
    assert [c.end for c in streamed] == table.end.tolist()
    assert all(c.depth == n and c.start == i for c in streamed)
    assert [c.word for c in streamed] == sorted(c.word for c in streamed)


def test_cylinder_table_restricted_to_an_end() -> None:
    P = _partition()
    j = int(P.successors(0)[0])
    table = cylinder_table(P, 0, 3, end=j)

    assert len(table) == cylinder_count(P, 0, 3, end=j)
    assert set(table.end.tolist()) == {j}


def test_cylinder_depth_is_capped() -> None:
    P = builtin_cat_partition(cat_map(), cylinder_cap=4)

    with pytest.raises(ValueError, match="cylinder explosion"):
        cylinder_table(P, 0, 5)
    with pytest.raises(ValueError, match="cylinder explosion"):
        next(enumerate_cylinders(P, 0, 5))


def test_word_map_and_itinerary_agree() -> None:
    P = _partition()
    rng = np.random.default_rng(5)
    start = 2
    coords = rng.uniform(0.0, P.lu[start], 200)

    words, off, sc, final = itinerary(P, start, coords, 6)

    assert np.all(words[:, 0] == start)
    assert np.all(P.transition[words[:, :-1], words[:, 1:]] == 1)
    assert off + sc * final == pytest.approx(coords, abs=1e-10)
    assert np.all(final >= -1e-9)
    assert np.all(final <= P.lu[words[:, -1]] + 1e-9)

    w_off, w_sc = word_map(P, tuple(words[0]))
    assert w_off == pytest.approx(off[0])
    assert w_sc == pytest.approx(sc[0])


def test_word_map_rejects_inadmissible_words() -> None:
    P = _partition()
    bad = [(i, j) for i in range(P.k) for j in range(P.k) if not P.transition[i, j]]
    assert bad

    with pytest.raises(ValueError, match="inadmissible word"):
        word_map(P, bad[0])


def test_partition_from_rectangles_validates_rows() -> None:
    auto = cat_map()
    with pytest.raises(ValueError, match="at least one"):
        partition_from_rectangles(auto, [])
    with pytest.raises(ValueError, match="anchor_x1"):
        partition_from_rectangles(auto, [[0.1, 0.2, 0.3]])
    with pytest.raises(ValueError, match="positive"):
        partition_from_rectangles(auto, [[0.1, 0.2, 0.0, 0.3]])


def test_user_rectangles_round_trip_the_builtin() -> None:
    P = _partition()
    rows = [[r.anchor[0], r.anchor[1], r.lu, r.ls] for r in P.rectangles]

    Q = partition_from_rectangles(P.auto, rows)

    assert Q.k == P.k
    assert sorted(Q.lu) == pytest.approx(sorted(P.lu))
    assert int(Q.transition.sum()) == int(P.transition.sum())
    assert verify_markov(Q, 5_000, np.random.default_rng(2)).passed


def test_require_markov_rejects_a_bad_cover() -> None:
    P = partition_from_rectangles(cat_map(), [[0.1, 0.1, 0.2, 0.2]])

    with pytest.raises(ValueError, match="rejected by verify_markov"):
        require_markov(P, 1_000, np.random.default_rng(0))


def test_frames_have_expected_shape() -> None:
    P = _partition()
    transitions = transition_frame(P)
    rects = rectangle_frame(P)

    assert len(transitions) == P.k * P.k
    assert transitions["allowed"].sum() == int(P.transition.sum())
    assert list(rects["index"]) == list(range(P.k))
    assert rects["area"].sum() == pytest.approx(1.0, abs=1e-9)
