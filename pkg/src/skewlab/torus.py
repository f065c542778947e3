# src/skewlab/torus.py
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any

import numpy as np

logger = logging.getLogger(__name__)

CAT_MATRIX: tuple[tuple[int, int], tuple[int, int]] = ((2, 1), (1, 1))

INJECTIVITY_RADIUS: float = 0.5
DEFAULT_MAX_ITERATE: int = 10_000

_MOD64 = 1 << 64
_TWO32 = float(1 << 32)


@dataclass(frozen=True, slots=True)
class ToralAutomorphism:
    """
    A hyperbolic automorphism of the 2-torus together with its eigenstructure.

    Eigenvalues are kept signed (`mu_u`, `mu_s`); `lambda_u = |mu_u| > 1`.
    `e_u`/`e_s` are unit eigenvectors whose first nonzero component is positive.
    """

    matrix: tuple[tuple[int, int], tuple[int, int]]
    det: int
    mu_u: float
    mu_s: float
    e_u: tuple[float, float]
    e_s: tuple[float, float]

    @property
    def lambda_u(self) -> float:
        return abs(self.mu_u)

    @property
    def lambda_s(self) -> float:
        return abs(self.mu_s)

    @property
    def trace(self) -> int:
        return self.matrix[0][0] + self.matrix[1][1]

    @property
    def array(self) -> np.ndarray:
        return np.array(self.matrix, dtype=float)

    @property
    def basis(self) -> np.ndarray:
        """Columns e_u, e_s."""
        return np.array([[self.e_u[0], self.e_s[0]], [self.e_u[1], self.e_s[1]]])

    @property
    def inverse_basis(self) -> np.ndarray:
        return np.linalg.inv(self.basis)

    @property
    def diagonal(self) -> np.ndarray:
        """The action of A in eigencoordinates."""
        return np.array([self.mu_u, self.mu_s])

    def to_dict(self) -> dict[str, Any]:
        return {
            "matrix": [list(r) for r in self.matrix],
            "det": self.det,
            "lambda_u": self.lambda_u,
            "mu_u": self.mu_u,
            "mu_s": self.mu_s,
            "e_u": list(self.e_u),
            "e_s": list(self.e_s),
        }


def _coerce_matrix(matrix: Any) -> tuple[tuple[int, int], tuple[int, int]]:
    arr = np.asarray(matrix)
    if arr.shape != (2, 2):
        raise ValueError(f"matrix must be 2x2, got shape {arr.shape}")
    out: list[tuple[int, int]] = []
    for row in arr.tolist():
        vals: list[int] = []
        for v in row:
            if isinstance(v, bool) or float(v) != int(v):
                raise ValueError(f"matrix entries must be integers, got {v!r}")
            vals.append(int(v))
        out.append((vals[0], vals[1]))
    return (out[0], out[1])


def _unit_eigenvector(m: tuple[tuple[int, int], tuple[int, int]], mu: float) -> tuple[float, float]:
    (a, b), (c, d) = m
    if b != 0:
        v = np.array([float(b), mu - a])
    else:
        v = np.array([mu - d, float(c)])
    v = v / np.linalg.norm(v)
    lead = v[0] if abs(v[0]) > 1e-15 else v[1]
    if lead < 0:
        v = -v
    return (float(v[0]), float(v[1]))


def eigen_data(matrix: Any) -> ToralAutomorphism:
    """
    Validate an integer 2x2 matrix as a hyperbolic toral automorphism.

    Raises ValueError("not Anosov ...") for |det| != 1, complex or unit-modulus
    spectrum.
    """
    m = _coerce_matrix(matrix)
    (a, b), (c, d) = m
    det = a * d - b * c
    if abs(det) != 1:
        raise ValueError(f"not Anosov: |det| must be 1, got det={det}")

    tr = a + d
    disc = tr * tr - 4 * det
    if disc <= 0:
        raise ValueError(f"not Anosov: spectrum of {[list(r) for r in m]} is not real hyperbolic")

    root = math.sqrt(disc)
    mu_plus = (tr + root) / 2.0
    mu_minus = (tr - root) / 2.0
    if min(abs(mu_plus), abs(mu_minus)) >= 1.0 - 1e-12:
        raise ValueError("not Anosov: eigenvalue on the unit circle")

    if abs(mu_plus) >= abs(mu_minus):
        mu_u, mu_s = mu_plus, mu_minus
    else:
        mu_u, mu_s = mu_minus, mu_plus

    auto = ToralAutomorphism(
        matrix=m,
        det=det,
        mu_u=mu_u,
        mu_s=mu_s,
        e_u=_unit_eigenvector(m, mu_u),
        e_s=_unit_eigenvector(m, mu_s),
    )
    logger.debug("eigen data for %s: lambda_u=%.12f", m, auto.lambda_u)
    return auto


def cat_map() -> ToralAutomorphism:
    return eigen_data(CAT_MATRIX)


# ---------------------------------------------------------------------------
# Points
# ---------------------------------------------------------------------------


def wrap(p: Any) -> np.ndarray:
    """Canonical representative in [0,1) of every coordinate."""
    arr = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite coordinates cannot be wrapped onto the torus")
    out = np.mod(arr, 1.0)
    # np.mod maps tiny negatives to exactly 1.0
    return np.where(out >= 1.0, 0.0, out)


def shortest_lift(d: Any) -> np.ndarray:
    """Representative of a displacement with coordinates in [-1/2, 1/2]."""
    arr = np.asarray(d, dtype=float)
    return arr - np.round(arr)


def torus_distance(a: Any, b: Any) -> np.ndarray:
    return np.linalg.norm(shortest_lift(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)), axis=-1)


def eigen_coords(auto: ToralAutomorphism, base: Any, p: Any) -> np.ndarray:
    """(u, s) of the shortest lift of p - base."""
    d = shortest_lift(np.asarray(p, dtype=float) - np.asarray(base, dtype=float))
    return d @ auto.inverse_basis.T


def from_eigen_coords(auto: ToralAutomorphism, base: Any, us: Any) -> np.ndarray:
    return wrap(np.asarray(base, dtype=float) + np.asarray(us, dtype=float) @ auto.basis.T)


# ---------------------------------------------------------------------------
# Exact base dynamics on the 2^-64 grid
# ---------------------------------------------------------------------------


def to_grid(p: Any) -> np.ndarray:
    """Fixed-point representation floor(x * 2^64) as uint64."""
    x = wrap(p)
    scaled = x * _TWO32
    hi = np.floor(scaled)
    lo = np.floor((scaled - hi) * _TWO32)
    return (hi.astype(np.uint64) << np.uint64(32)) | lo.astype(np.uint64)


def from_grid(z: np.ndarray) -> np.ndarray:
    hi = (z >> np.uint64(32)).astype(float)
    lo = (z & np.uint64(0xFFFFFFFF)).astype(float)
    x = (hi + lo / _TWO32) / _TWO32
    return np.where(x >= 1.0, 0.0, x)


def _matmul_mod(
    p: tuple[tuple[int, int], tuple[int, int]],
    q: tuple[tuple[int, int], tuple[int, int]],
) -> tuple[tuple[int, int], tuple[int, int]]:
    return (
        (
            (p[0][0] * q[0][0] + p[0][1] * q[1][0]) % _MOD64,
            (p[0][0] * q[0][1] + p[0][1] * q[1][1]) % _MOD64,
        ),
        (
            (p[1][0] * q[0][0] + p[1][1] * q[1][0]) % _MOD64,
            (p[1][0] * q[0][1] + p[1][1] * q[1][1]) % _MOD64,
        ),
    )


def matrix_power_mod(auto: ToralAutomorphism, n: int) -> tuple[tuple[int, int], tuple[int, int]]:
    """A^n with entries reduced mod 2^64; negative n uses det * adj(A)."""
    (a, b), (c, d) = auto.matrix
    if n >= 0:
        base = ((a % _MOD64, b % _MOD64), (c % _MOD64, d % _MOD64))
    else:
        det = auto.det
        base = (
            ((det * d) % _MOD64, (-det * b) % _MOD64),
            ((-det * c) % _MOD64, (det * a) % _MOD64),
        )
        n = -n

    result = ((1, 0), (0, 1))
    while n:
        if n & 1:
            result = _matmul_mod(result, base)
        base = _matmul_mod(base, base)
        n >>= 1
    return result


def apply_grid(auto: ToralAutomorphism, z: np.ndarray, n: int) -> np.ndarray:
    """A^n on an (m, 2) array of grid points; uint64 arithmetic wraps mod 1."""
    m = np.array(matrix_power_mod(auto, n), dtype=np.uint64)
    z1 = z[:, 0]
    z2 = z[:, 1]
    out = np.empty_like(z)
    out[:, 0] = m[0, 0] * z1 + m[0, 1] * z2
    out[:, 1] = m[1, 0] * z1 + m[1, 1] * z2
    return out


def apply_auto(
    auto: ToralAutomorphism,
    p: Any,
    n: int,
    *,
    max_iterate: int = DEFAULT_MAX_ITERATE,
) -> np.ndarray:
    """
    A^n p mod 1.

    Points are snapped to the 2^-64 grid and the integer matrix power is
    applied exactly there. Callers that iterate should stay on the grid
    with `apply_grid`; converting back to floats between steps drops the
    low bits.
    """
    if abs(int(n)) > max_iterate:
        raise ValueError(f"|n|={abs(int(n))} exceeds max_iterate={max_iterate}")
    arr = wrap(p)
    z = to_grid(arr.reshape(-1, 2))
    return from_grid(apply_grid(auto, z, int(n))).reshape(arr.shape)


# ---------------------------------------------------------------------------
# Local product structure
# ---------------------------------------------------------------------------


def bracket(
    auto: ToralAutomorphism,
    a: Any,
    b: Any,
    scale: float = INJECTIVITY_RADIUS,
) -> np.ndarray:
    """
    The point W^u_loc(a) ∩ W^s_loc(b).

    Argument order matters: a supplies the unstable leaf, b the stable leaf.

    With (du, ds) the eigencoordinates of the shortest lift of a - b the
    result is b + ds * e_s, equivalently a - du * e_u.
    """
    if not (0.0 < scale <= INJECTIVITY_RADIUS):
        raise ValueError(f"bracket scale must lie in (0, {INJECTIVITY_RADIUS}], got {scale}")

    a_arr = wrap(a)
    b_arr = wrap(b)
    d = shortest_lift(a_arr - b_arr)
    if np.any(np.linalg.norm(d, axis=-1) > scale):
        raise ValueError(f"no local bracket: points are farther apart than {scale}")

    us = d @ auto.inverse_basis.T
    e_s = np.asarray(auto.e_s)
    return wrap(b_arr + us[..., 1:2] * e_s)
