# quadrature.py - Quadrature rules on the reference triangle and on edges
"""
Symmetric quadrature rules on the reference triangle {x, y >= 0, x + y <= 1}
and Gauss-Legendre rules on [0, 1].

Low degrees use the classical closed-form symmetric rules. From degree 6 on
a collapsed (conical) Gauss-Jacobi x Gauss-Legendre product is built and then
averaged over the six affine symmetries of the triangle, which keeps the
exactness and makes the rule symmetric. All weights are positive.
"""

from dataclasses import dataclass
from functools import lru_cache
from itertools import permutations

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from src.core.errors import ParameterError

MAX_TRIANGLE_DEGREE = 10
DEFAULT_VOLUME_DEGREE = 6


@dataclass(frozen=True, eq=False)
class QuadRule:
    """Rule on the reference triangle; weights sum to its area 1/2"""
    points: np.ndarray
    weights: np.ndarray
    exact_degree: int

    @property
    def barycentric(self):
        """(Q, 3) barycentric coordinates (1 - x - y, x, y)"""
        x, y = self.points[:, 0], self.points[:, 1]
        return np.column_stack([1.0 - x - y, x, y])

    @property
    def n_points(self):
        return self.points.shape[0]


@dataclass(frozen=True, eq=False)
class EdgeQuadRule:
    """Rule on [0, 1]; weights sum to 1"""
    points: np.ndarray
    weights: np.ndarray
    exact_degree: int

    @property
    def n_points(self):
        return self.points.shape[0]


def _from_barycentric(orbits):
    """Expand (barycentric point, weight) orbits into reference points and weights"""
    points = []
    weights = []
    for bary, weight in orbits:
        for perm in sorted(set(permutations(bary))):
            points.append((perm[1], perm[2]))
            weights.append(weight)
    return np.array(points), 0.5 * np.array(weights)


def _centroid_rule():
    points, weights = _from_barycentric([((1 / 3, 1 / 3, 1 / 3), 1.0)])
    return QuadRule(points, weights, 1)


def _three_point_rule():
    points, weights = _from_barycentric([((2 / 3, 1 / 6, 1 / 6), 1 / 3)])
    return QuadRule(points, weights, 2)


def _seven_point_rule():
    """Radon's degree-5 rule"""
    s15 = np.sqrt(15.0)
    a1 = (6.0 - s15) / 21.0
    a2 = (6.0 + s15) / 21.0
    orbits = [
        ((1 / 3, 1 / 3, 1 / 3), 9.0 / 40.0),
        ((a1, a1, 1.0 - 2.0 * a1), (155.0 - s15) / 1200.0),
        ((a2, a2, 1.0 - 2.0 * a2), (155.0 + s15) / 1200.0),
    ]
    points, weights = _from_barycentric(orbits)
    return QuadRule(points, weights, 5)


def _collapsed_rule(degree):
    """Conical product rule symmetrized over the triangle's symmetry group"""
    n = (degree + 2) // 2
    # (1 - t) Jacobi weight absorbs the Jacobian of the collapse
    t, wt = roots_jacobi(n, 1.0, 0.0)
    s, ws = roots_legendre(n)
    xi = 0.5 * (1.0 + t)
    w_xi = wt / 4.0
    eta = 0.5 * (1.0 + s)
    w_eta = ws / 2.0

    x = np.repeat(xi, n)
    y = np.tile(eta, n) * (1.0 - x)
    w = np.outer(w_xi, w_eta).ravel()

    bary = np.column_stack([1.0 - x - y, x, y])
    points = []
    weights = []
    for perm in permutations(range(3)):
        b = bary[:, perm]
        points.append(b[:, 1:])
        weights.append(w / 6.0)
    return QuadRule(np.vstack(points), np.concatenate(weights), 2 * n - 1)


@lru_cache(maxsize=None)
def triangle_rule(degree=DEFAULT_VOLUME_DEGREE):
    """Symmetric rule on the reference triangle exact to at least `degree`"""
    if not 1 <= degree <= MAX_TRIANGLE_DEGREE:
        raise ParameterError(f"unsupported triangle quadrature degree {degree} (1..{MAX_TRIANGLE_DEGREE})")
    if degree == 1:
        return _centroid_rule()
    if degree == 2:
        return _three_point_rule()
    if degree <= 5:
        return _seven_point_rule()
    return _collapsed_rule(degree)


@lru_cache(maxsize=None)
def edge_rule(degree=DEFAULT_VOLUME_DEGREE):
    """Gauss-Legendre rule on [0, 1] exact to at least `degree`"""
    if not 0 <= degree <= 2 * MAX_TRIANGLE_DEGREE + 1:
        raise ParameterError(f"unsupported edge quadrature degree {degree}")
    n = max(1, (degree + 2) // 2)
    s, w = roots_legendre(n)
    return EdgeQuadRule(0.5 * (1.0 + s), 0.5 * w, 2 * n - 1)
