"""
Quadrature on the reference triangle {(xi, eta): xi, eta >= 0, xi + eta <= 1}
and on the reference edge [0, 1].

Low degrees use tabulated symmetric rules; everything else uses the collapsed
(conical product) Gauss-Jacobi x Gauss-Legendre rule, which is available for
any degree.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

from .errors import QuadratureError

MAX_TRIANGLE_DEGREE = 30


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray      # (n, 2) reference coordinates, or (n,) edge parameters
    weights: np.ndarray     # (n,)
    exact_degree: int

    @property
    def barycentric(self) -> np.ndarray:
        """Barycentric coordinates (lambda0, lambda1, lambda2) of triangle points."""
        xi, eta = self.points[:, 0], self.points[:, 1]
        return np.column_stack([1.0 - xi - eta, xi, eta])

    def __len__(self) -> int:
        return len(self.weights)


def _orbit3(a: float) -> list:
    """Three permutations of the barycentric point (a, a, 1 - 2a)."""
    b = 1.0 - 2.0 * a
    return [(a, a), (b, a), (a, b)]


def _symmetric_table():
    rt15 = math.sqrt(15.0)
    table = {}
    table[1] = ([(1.0 / 3.0, 1.0 / 3.0)], [0.5], 1)
    table[2] = (_orbit3(1.0 / 6.0), [1.0 / 6.0] * 3, 2)
    # Dunavant, 6 points
    a1, w1 = 0.445948490915965, 0.223381589678011
    a2, w2 = 0.091576213509771, 0.109951743655322
    table[4] = (_orbit3(a1) + _orbit3(a2), [w1 / 2] * 3 + [w2 / 2] * 3, 4)
    # Radon, 7 points (closed form)
    a1, a2 = (6.0 - rt15) / 21.0, (6.0 + rt15) / 21.0
    w1, w2 = (155.0 - rt15) / 2400.0, (155.0 + rt15) / 2400.0
    table[5] = ([(1.0 / 3.0, 1.0 / 3.0)] + _orbit3(a1) + _orbit3(a2), [9.0 / 80.0] + [w1] * 3 + [w2] * 3, 5)
    return table


_TABLE = _symmetric_table()


@lru_cache(maxsize=None)
def collapsed_rule(degree: int) -> QuadratureRule:
    """Conical product rule exact for total degree `degree`, any degree."""
    n = max(1, math.ceil((degree + 1) / 2))
    # (1 - u) weight in the collapsed direction absorbs the Duffy Jacobian
    xj, wj = roots_jacobi(n, 1.0, 0.0)
    xl, wl = np.polynomial.legendre.leggauss(n)
    u = 0.5 * (1.0 + xj)
    v = 0.5 * (1.0 + xl)
    wu = 0.25 * wj
    wv = 0.5 * wl
    U, V = np.meshgrid(u, v, indexing="ij")
    points = np.column_stack([U.ravel(), ((1.0 - U) * V).ravel()])
    weights = np.outer(wu, wv).ravel()
    return QuadratureRule(points, weights, 2 * n - 1)


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> QuadratureRule:
    """Rule on the reference triangle exact for all monomials of total degree <= degree."""
    if degree < 0:
        raise QuadratureError(f"quadrature degree must be >= 0, got {degree}")
    if degree > MAX_TRIANGLE_DEGREE:
        raise QuadratureError(f"triangle quadrature degree {degree} above supported range {MAX_TRIANGLE_DEGREE}")
    if degree == 0:
        degree = 1
    if degree == 3:
        degree = 4  # the symmetric degree-3 rule has a negative weight
    if degree in _TABLE:
        pts, wts, exact = _TABLE[degree]
        return QuadratureRule(np.array(pts, dtype=float), np.array(wts, dtype=float), exact)
    return collapsed_rule(degree)


@lru_cache(maxsize=None)
def edge_rule(degree: int) -> QuadratureRule:
    """Gauss-Legendre rule on [0, 1]; n points are exact to degree 2n - 1."""
    if degree < 0:
        raise QuadratureError(f"quadrature degree must be >= 0, got {degree}")
    n = max(1, math.ceil((degree + 1) / 2))
    x, w = np.polynomial.legendre.leggauss(n)
    return QuadratureRule(0.5 * (1.0 + x), 0.5 * w, 2 * n - 1)


def assembly_degree(k: int, m: int) -> int:
    """Default element and curved-edge degree for assembly."""
    return 2 * k + 2 * m + 2


def error_degree(k: int, m: int) -> int:
    return 2 * k + 2 * m + 4
