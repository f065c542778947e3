from __future__ import annotations

import numpy as np

from skewlab.partition import builtin_cat_partition, cylinder_count, cylinder_table, verify_markov
from skewlab.torus import cat_map


def test_benchmark_cylinder_table_depth_6(benchmark) -> None:
    P = builtin_cat_partition(cat_map())

    result = benchmark(lambda: cylinder_table(P, 0, 6))

    assert len(result) == cylinder_count(P, 0, 6)


def test_benchmark_verify_markov(benchmark) -> None:
    P = builtin_cat_partition(cat_map())

    result = benchmark(lambda: verify_markov(P, 10_000, np.random.default_rng(0)))

    assert result.passed
