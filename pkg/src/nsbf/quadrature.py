"""Quadrature rules on triangles and line segments.

Triangle rules are given in barycentric form so they can be mapped to any
physical cell with ``x = sum_i lambda_i X_i``; weights are normalised to sum
to one and must be multiplied by the cell area.
"""
from functools import lru_cache

import numpy as np

__all__ = [
    "TriangleRule",
    "triangle_rule",
    "conical_rule",
    "gauss_segment",
    "graded_segment",
    "map_to_cells",
]


class TriangleRule:
    """Barycentric points (n, 3) and area-normalised weights (n,)."""

    def __init__(self, bary, weights, degree):
        self.bary = np.asarray(bary, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        self.degree = degree

    def __len__(self):
        return len(self.weights)

    def reference(self):
        """Points and weights on the reference triangle (0,0),(1,0),(0,1)."""
        pts = self.bary[:, 1:]
        return pts, 0.5 * self.weights


def _orbit3(a, w):
    b = 1.0 - 2.0 * a
    return [(a, a, b), (a, b, a), (b, a, a)], [w] * 3


def _orbit6(a, b, w):
    c = 1.0 - a - b
    pts = [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]
    return pts, [w] * 6


def _assemble(*orbits):
    pts, wts = [], []
    for p, w in orbits:
        pts += p
        wts += w
    return np.array(pts), np.array(wts)


@lru_cache(maxsize=None)
def triangle_rule(name):
    """Symmetric Gauss rule ``poly2``, ``poly4`` or ``poly6`` (Dunavant).

    Exact for polynomials up to the named total degree.
    """
    if name == "poly2":
        bary, w = _assemble(_orbit3(1.0 / 6.0, 1.0 / 3.0))
        deg = 2
    elif name == "poly4":
        bary, w = _assemble(
            _orbit3(0.445948490915965, 0.223381589678011),
            _orbit3(0.091576213509771, 0.109951743655322),
        )
        deg = 4
    elif name == "poly6":
        bary, w = _assemble(
            _orbit3(0.249286745170910, 0.116786275726379),
            _orbit3(0.063089014491502, 0.050844906370207),
            _orbit6(0.053145049844817, 0.310352451033784, 0.082851075618374),
        )
        deg = 6
    else:
        raise ValueError(f"unknown triangle rule {name!r}")
    return TriangleRule(bary, w / w.sum(), deg)


@lru_cache(maxsize=None)
def conical_rule(degree):
    """Collapsed Gauss-Jacobi product rule exact to ``degree`` (any order)."""
    n = degree // 2 + 1
    # Gauss-Jacobi(alpha=1) for the collapsed direction via scipy
    from scipy.special import roots_jacobi

    s, ws = roots_jacobi(n, 1.0, 0.0)  # weight (1 - s)
    t, wt = np.polynomial.legendre.leggauss(n)
    s = 0.5 * (s + 1.0)
    t = 0.5 * (t + 1.0)
    ws = ws / 4.0
    wt = wt / 2.0
    S, T = np.meshgrid(s, t, indexing="ij")
    W = np.outer(ws, wt)
    x = S.ravel()
    y = ((1.0 - S) * T).ravel()
    w = 2.0 * W.ravel()  # total weight one on the reference triangle
    bary = np.column_stack([1.0 - x - y, x, y])
    return TriangleRule(bary, w / w.sum(), degree)


@lru_cache(maxsize=None)
def gauss_segment(n):
    """Gauss-Legendre points on [0, 1] with weights summing to one."""
    t, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (t + 1.0), 0.5 * w


def graded_segment(n, levels=40, ratio=0.5):
    """Composite Gauss-Legendre rule on [0, 1] graded towards both ends.

    Subintervals shrink geometrically by ``ratio`` towards each endpoint, so
    integrands with an algebraic endpoint singularity (``t**a``, ``a > -1``)
    converge exponentially in ``levels``.
    """
    half = 0.5 * ratio ** np.arange(levels + 1)  # 0.5, 0.25, ...
    breaks = np.concatenate([[0.0], half[::-1], 1.0 - half[1:]]) if levels else np.array([0.0, 0.5])
    breaks = np.unique(np.concatenate([breaks, [1.0]]))
    t, w = gauss_segment(n)
    a, b = breaks[:-1, None], breaks[1:, None]
    return (a + (b - a) * t).ravel(), ((b - a) * w).ravel()


def map_to_cells(rule, verts):
    """Physical quadrature points for a batch of triangles.

    Parameters
    ----------
    rule : TriangleRule
    verts : ndarray, shape (N, 3, 2)

    Returns
    -------
    ndarray, shape (N, nq, 2)
    """
    return np.einsum("qi,nid->nqd", rule.bary, verts)
