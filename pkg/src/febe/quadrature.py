"""Quadrature rules on the reference triangle and on segments.

Triangle rules are stored in barycentric coordinates with weights
normalised to sum to one, so that ``area * sum(w * f(x))`` integrates
``f`` over a physical triangle.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class QuadratureRule:
    """Barycentric points ``(n, 3)`` and weights ``(n,)`` summing to 1."""

    points: np.ndarray
    weights: np.ndarray
    degree: int

    def __len__(self):
        return len(self.weights)

    def physical_points(self, corners):
        """Map to physical coordinates.

        ``corners`` has shape ``(m, 3, 2)``; the result has shape ``(m, n, 2)``.
        """
        return np.einsum("qi,mid->mqd", self.points, corners)


@lru_cache(maxsize=None)
def gauss_legendre(n):
    """``n``-point Gauss-Legendre rule on ``[0, 1]``."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def strang_fix_7():
    """Symmetric 7-point rule, exact for polynomials of degree 5."""
    s15 = np.sqrt(15.0)
    a1, b1 = (6.0 - s15) / 21.0, (9.0 + 2.0 * s15) / 21.0
    a2, b2 = (6.0 + s15) / 21.0, (9.0 - 2.0 * s15) / 21.0
    w1, w2 = (155.0 - s15) / 1200.0, (155.0 + s15) / 1200.0
    pts = np.array([
        [1 / 3, 1 / 3, 1 / 3],
        [b1, a1, a1], [a1, b1, a1], [a1, a1, b1],
        [b2, a2, a2], [a2, b2, a2], [a2, a2, b2],
    ])
    w = np.array([9.0 / 40.0, w1, w1, w1, w2, w2, w2])
    return QuadratureRule(pts, w, 5)


@lru_cache(maxsize=None)
def collapsed_gauss(n, grading=1):
    """Conical product rule built from ``n x n`` Gauss points.

    The square ``(s, t)`` is collapsed onto the triangle with vertex 0 at
    ``s = 0``.  With ``grading = k > 1`` the substitution ``s = tau**k``
    clusters points at vertex 0, which makes integrands behaving like
    ``r**(-a)`` (``a < 2``) at that vertex smooth in ``tau`` for ``k`` large.
    """
    x, w = gauss_legendre(n)
    tau, t = np.meshgrid(x, x, indexing="ij")
    wt = np.outer(w, w)
    k = grading
    s = tau ** k
    jac = 2.0 * s * k * tau ** (k - 1)
    lam0 = 1.0 - s
    lam1 = s * (1.0 - t)
    lam2 = s * t
    pts = np.stack([lam0.ravel(), lam1.ravel(), lam2.ravel()], axis=1)
    weights = (wt * jac).ravel()
    degree = 2 * n - 2 if k == 1 else 0
    return QuadratureRule(pts, weights, degree)


def rotate_to_vertex(rule, vertex):
    """Return ``rule`` with its special vertex 0 moved to local ``vertex``."""
    perm = np.roll(np.arange(3), -vertex)
    pts = np.empty_like(rule.points)
    pts[:, perm] = rule.points
    return QuadratureRule(pts, rule.weights, rule.degree)


@lru_cache(maxsize=None)
def graded_segment_rule(n, grading=3):
    """Rule on ``[0, 1]`` clustered at 0 through ``s = tau**grading``."""
    x, w = gauss_legendre(n)
    s = x ** grading
    return s, w * grading * x ** (grading - 1)


@lru_cache(maxsize=None)
def geometric_segment_rule(n, sigma=0.15, levels=8):
    """Composite Gauss rule on ``[0, 1]`` geometrically graded towards 0.

    Suited to integrands that are continuous but only log-Hoelder at 0,
    such as the inner potential of an adjacent boundary segment.
    """
    x, w = gauss_legendre(n)
    breaks = np.concatenate([[0.0], sigma ** np.arange(levels, -1, -1)])
    pts, wts = [], []
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        pts.append(lo + (hi - lo) * x)
        wts.append((hi - lo) * w)
    return np.concatenate(pts), np.concatenate(wts)


def composite_segment_rule(n, panels):
    """``panels`` equal Gauss panels on ``[0, 1]``."""
    x, w = gauss_legendre(n)
    offs = np.arange(panels)[:, None]
    return ((offs + x) / panels).ravel(), np.tile(w / panels, panels)
