from __future__ import annotations

import numpy as np

from skewlab.system import leaf_fiber, make_system
from skewlab.torus import CAT_MATRIX


def _points(n: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(1)
    p = np.column_stack([rng.random((n, 2)), rng.random(n)])
    return p, rng.uniform(-0.1, 0.1, n)


def test_benchmark_leaf_fiber_small(benchmark) -> None:
    sys = make_system(CAT_MATRIX, kappa=0.3, delta=0.1, alpha=0.1)
    p, t = _points(100)

    result = benchmark(lambda: leaf_fiber(sys, p, t))

    assert result.shape == (100,)


def test_benchmark_leaf_fiber_large(benchmark) -> None:
    sys = make_system(CAT_MATRIX, kappa=0.3, delta=0.1, alpha=0.1)
    p, t = _points(10_000)

    result = benchmark(lambda: leaf_fiber(sys, p, t))

    assert np.all((result >= 0.0) & (result < 1.0))
