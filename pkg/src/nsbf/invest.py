"""Numerical laboratory for the bubble-weighted inverse estimate of ``|f| f + g``.

For affine vector fields ``f, g`` on a triangle ``K`` the quotient

    Q(f) = sup_g ||(|f| f + g)||_K / ||b_K^(1/2) (|f| f + g)||_K,

with ``b_K = 27 lambda_1 lambda_2 lambda_3`` the cubic bubble, is the largest
generalised Rayleigh quotient of the plain versus the bubble-weighted Gram
matrix on ``span{(1 - P)(|f| f)} + P1(K)^2`` (``P`` the bubble-weighted
projection onto affine fields).

``|f|`` has a conical kink at the zero of ``f``.  Integrals are therefore
computed by splitting ``K`` at the point ``X`` of ``K`` where ``|f|`` is
smallest and integrating each sub-triangle in collapsed coordinates
``x = X + s (w0 + t w1)``; when ``f(X) = 0`` the integrand is polynomial in
``s``, otherwise the ``s``- and ``t``-rules are Gauss-Legendre rules graded
geometrically towards the near-singularity.
"""
from dataclasses import dataclass, field
import json
import math

import numpy as np
from scipy import linalg, optimize

from .quadrature import conical_rule, gauss_segment, map_to_cells

__all__ = [
    "BubbleContext",
    "AffineField",
    "bubble",
    "cell_integrals",
    "quotient_Q",
    "classical_bubble_constant",
    "sample_slice",
    "estimate_C_eq",
    "inverse_report",
    "dumps_report",
]

REFERENCE_TRIANGLE = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


@dataclass(frozen=True)
class BubbleContext:
    """Triangle geometry and quadrature controls.

    Parameters
    ----------
    vertices : (3, 2) array
        Triangle, the reference triangle by default.
    npts : int
        Gauss points per (graded) subinterval.
    max_levels : int
        Cap on the number of geometric grading levels.
    """

    vertices: np.ndarray = field(default_factory=lambda: REFERENCE_TRIANGLE.copy())
    npts: int = 10
    max_levels: int = 48

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.shape != (3, 2):
            raise ValueError("vertices must have shape (3, 2)")
        if abs(self.area) == 0.0:
            raise ValueError("degenerate triangle")

    @property
    def area(self):
        v = np.asarray(self.vertices, dtype=float)
        e1, e2 = v[1] - v[0], v[2] - v[0]
        return 0.5 * abs(e1[0] * e2[1] - e1[1] * e2[0])

    @property
    def midpoint(self):
        return np.asarray(self.vertices, dtype=float).mean(axis=0)

    @property
    def diameter(self):
        v = np.asarray(self.vertices, dtype=float)
        return max(np.linalg.norm(v[i] - v[j]) for i in range(3) for j in range(i))


@dataclass(frozen=True)
class AffineField:
    """``f(x) = a + B (x - mid(K))``."""

    a: np.ndarray
    B: np.ndarray

    def __call__(self, x, mid):
        x = np.asarray(x, dtype=float)
        return np.asarray(self.a, dtype=float) + (x - mid) @ np.asarray(self.B, dtype=float).T


def bubble(ctx, x):
    """``27 lambda_1 lambda_2 lambda_3`` at points ``x`` (..., 2)."""
    v = np.asarray(ctx.vertices, dtype=float)
    T = np.column_stack([v[1] - v[0], v[2] - v[0]])
    lam12 = np.linalg.solve(T, (np.asarray(x, dtype=float) - v[0]).reshape(-1, 2).T).T
    lam = np.column_stack([1.0 - lam12.sum(axis=1), lam12])
    return (27.0 * lam.prod(axis=1)).reshape(np.shape(x)[:-1])


def _graded_rule(c, levels, n):
    """Gauss rule on [0, 1] graded geometrically towards ``c`` from both sides."""
    t, w = gauss_segment(n)
    pts, wts = [], []
    frac = 0.5 ** np.arange(1, levels + 1)
    for lo, hi in ((0.0, c), (c, 1.0)):
        L = hi - lo
        if L <= 0.0:
            continue
        # breakpoints accumulate at c
        inner = c - L * frac if hi == c else c + L * frac
        br = np.sort(np.concatenate([[lo, hi], inner]))
        a, b = br[:-1, None], br[1:, None]
        pts.append((a + (b - a) * t).ravel())
        wts.append(((b - a) * w).ravel())
    return np.concatenate(pts), np.concatenate(wts)


def _levels(d, cap):
    if not np.isfinite(d) or d >= 0.5:
        return 0
    return int(min(cap, math.ceil(math.log2(1.0 / max(d, 2.0**-cap))) + 1))


def _argmin_abs(f, v, mid):
    """Point of the closed triangle where ``|f|`` is smallest."""
    a = np.asarray(f.a, dtype=float)
    B = np.asarray(f.B, dtype=float)
    if abs(np.linalg.det(B)) > 1e-13 * max(np.linalg.norm(B, 2), 1e-300) ** 2:
        x0 = mid - np.linalg.solve(B, a)
        T = np.column_stack([v[1] - v[0], v[2] - v[0]])
        l12 = np.linalg.solve(T, x0 - v[0])
        lam = np.array([1.0 - l12.sum(), l12[0], l12[1]])
        if lam.min() >= -1e-14:
            lam = np.clip(lam, 0.0, None)
            lam /= lam.sum()
            return lam @ v
    best, bx = np.inf, v[0]
    for i in range(3):
        p, q = v[i], v[(i + 1) % 3]
        g0 = f(p, mid)
        g1 = B @ (q - p)
        den = g1 @ g1
        t = 0.0 if den == 0.0 else float(np.clip(-(g0 @ g1) / den, 0.0, 1.0))
        x = p + t * (q - p)
        val = np.linalg.norm(f(x, mid))
        if val < best:
            best, bx = val, x
    return bx


def cell_points(f, ctx):
    """Quadrature points and weights on the cell adapted to the kink of ``|f|``."""
    v = np.asarray(ctx.vertices, dtype=float)
    mid = ctx.midpoint
    B = np.asarray(f.B, dtype=float)
    X = _argmin_abs(f, v, mid)
    fX = f(X, mid)
    scale = np.linalg.norm(f.a) + np.linalg.norm(B, 2) * ctx.diameter
    exact = scale == 0.0 or np.linalg.norm(fX) <= 1e-14 * scale
    n = ctx.npts
    pts, wts = [], []
    for i in range(3):
        p, q = v[i], v[(i + 1) % 3]
        w0, w1 = p - X, q - p
        det = abs(w0[0] * w1[1] - w0[1] * w1[0])
        if det <= 1e-14 * 2.0 * ctx.area:
            continue
        # |f| along the edge: alpha (t - tc)^2 + beta
        e0 = f(p, mid)
        g1 = B @ w1
        alpha = g1 @ g1
        if alpha > 0.0:
            tc = -(e0 @ g1) / alpha
            beta = max(e0 @ e0 - alpha * tc * tc, 0.0)
            d_edge = math.sqrt(beta) / math.sqrt(alpha)
            tc = float(np.clip(tc, 0.0, 1.0))
        else:
            tc, d_edge = 0.0, np.inf
        if exact:
            s, ws = gauss_segment(n)
            d_t = d_edge
        else:
            spread = max(np.linalg.norm(f(p, mid) - fX), np.linalg.norm(f(q, mid) - fX))
            d_s = np.linalg.norm(fX) / spread if spread > 0 else np.inf
            s, ws = _graded_rule(0.0, _levels(d_s, ctx.max_levels), n)
            d_t = min(d_edge, d_s)
        t, wt = _graded_rule(tc, _levels(d_t, ctx.max_levels), n)
        S, Tt = np.meshgrid(s, t, indexing="ij")
        W = np.outer(ws * s, wt) * det
        x = X + S[..., None] * (w0 + Tt[..., None] * w1)
        pts.append(x.reshape(-1, 2))
        wts.append(W.ravel())
    return np.concatenate(pts), np.concatenate(wts)


def _p1_basis(x, ctx):
    """Affine vector fields e_c, e_c xi_1, e_c xi_2 (xi scaled by the diameter)."""
    xi = (x - ctx.midpoint) / ctx.diameter
    one = np.ones(len(x))
    out = np.zeros((len(x), 6, 2))
    for c in range(2):
        out[:, 3 * c + 0, c] = one
        out[:, 3 * c + 1, c] = xi[:, 0]
        out[:, 3 * c + 2, c] = xi[:, 1]
    return out


def _gram(w, V):
    """``sum_q w_q V_q V_q^T`` for vector-valued columns ``V`` (q, n, 2)."""
    Vt = V.transpose(1, 0, 2).reshape(V.shape[1], -1)
    return (Vt * np.repeat(w, 2)) @ Vt.T


def nonaffine_part(f, x, mid):
    """``|f| f`` minus its first-order Taylor polynomial at ``mid``.

    Differs from ``|f| f`` by an affine field, so it spans the same space
    modulo ``P1``, and is evaluated without cancellation: with ``f = a + d``,

        r = (|f| - |a| - a.d/|a|) a + (|f| - |a|) d,

    where both brackets are rewritten as ratios of ``O(|d|^2)`` terms.
    """
    a = np.asarray(f.a, dtype=float)
    fx = f(x, mid)
    na = np.linalg.norm(a)
    nf = np.linalg.norm(fx, axis=1)
    if na == 0.0:
        return nf[:, None] * fx
    d = fx - a
    ad = d @ a
    dd = (d * d).sum(axis=1)
    s = nf + na
    diff = (2.0 * ad + dd) / s  # |f| - |a|
    first = (na * dd - ad * diff) / (na * s)  # |f| - |a| - a.d/|a|
    return first[:, None] * a + diff[:, None] * d


def _values(f, ctx):
    x, w = cell_points(f, ctx)
    h = nonaffine_part(f, x, ctx.midpoint)
    V = np.concatenate([h[:, None, :], _p1_basis(x, ctx)], axis=1)
    return x, w, V


def cell_integrals(f, ctx):
    """Plain and bubble-weighted Gram matrices of ``[r, P1 basis]`` (7 x 7).

    ``r`` is :func:`nonaffine_part` of ``|f| f``.
    """
    x, w, V = _values(f, ctx)
    return _gram(w, V), _gram(w * bubble(ctx, x), V)


def _largest_ratio(M, Mb):
    lam = linalg.eigh(M, Mb, eigvals_only=True)
    return float(np.sqrt(lam[-1]))


def quotient_Q(f, ctx=None, rel_tol=1e-12):
    """``Q(f)`` as the root of the largest generalised eigenvalue.

    When ``(1 - P)(|f| f)`` vanishes (``f`` constant) the quotient reduces
    to the affine bubble constant.
    """
    ctx = BubbleContext() if ctx is None else ctx
    if not isinstance(f, AffineField):
        f = AffineField(*f)
    x, w, V = _values(f, ctx)
    bw = w * bubble(ctx, x)
    G = _gram(bw, V)
    coef = np.linalg.solve(G[1:, 1:], G[1:, 0])
    P1 = V[:, 1:]
    h_perp = V[:, 0] - np.tensordot(P1, coef, axes=([1], [0]))
    n_h = math.sqrt(max(G[0, 0], 0.0))
    n_perp = math.sqrt(float(bw @ (h_perp * h_perp).sum(axis=1)))
    if n_h == 0.0 or n_perp <= rel_tol * n_h:
        basis = P1
    else:
        basis = np.concatenate([(h_perp / n_perp)[:, None, :], P1], axis=1)
    M, Mb = _gram(w, basis), _gram(bw, basis)
    return _largest_ratio(M, Mb)


def classical_bubble_constant(k, ctx=None):
    """Best constant of ``||q|| <= C ||b^(1/2) q||`` over scalar ``P_k`` on the cell.

    Vector-valued ``P_k^2`` gives the same constant (block-diagonal Grams).
    """
    if k not in (0, 1, 2):
        raise ValueError("k must be 0, 1 or 2")
    ctx = BubbleContext() if ctx is None else ctx
    rule = conical_rule(8)  # b q^2 has degree 3 + 2k <= 7
    x = map_to_cells(rule, np.asarray(ctx.vertices, dtype=float)[None])[0]
    w = rule.weights * ctx.area
    xi = (x - ctx.midpoint) / ctx.diameter
    cols = [xi[:, 0] ** (d - i) * xi[:, 1] ** i for d in range(k + 1) for i in range(d + 1)]
    V = np.stack(cols, axis=1)
    M = V.T @ (w[:, None] * V)
    Mb = V.T @ ((w * bubble(ctx, x))[:, None] * V)
    return _largest_ratio(M, Mb)


def sample_slice(n, rng):
    """``(a, B)`` with ``|a| + sigma_1(B) = 1``.

    ``a = alpha (cos phi, sin phi)``, ``B = (1 - alpha) M / sigma_1(M)`` with
    ``phi``, ``alpha`` and the entries of ``M`` uniform.
    """
    phi = rng.uniform(0.0, 2.0 * np.pi, n)
    alpha = rng.uniform(0.0, 1.0, n)
    M = rng.uniform(-1.0, 1.0, (n, 2, 2))
    s1 = np.linalg.norm(M, ord=2, axis=(1, 2))
    a = alpha[:, None] * np.column_stack([np.cos(phi), np.sin(phi)])
    B = (1.0 - alpha)[:, None, None] * M / s1[:, None, None]
    return a, B


def _to_slice(params):
    phi, alpha_raw = params[0], params[1]
    alpha = 0.5 * (1.0 + math.sin(alpha_raw))
    M = np.asarray(params[2:6], dtype=float).reshape(2, 2)
    s1 = np.linalg.norm(M, 2)
    if s1 == 0.0:
        M, s1 = np.eye(2), 1.0
    return alpha * np.array([math.cos(phi), math.sin(phi)]), (1.0 - alpha) * M / s1


def estimate_C_eq(samples, seed, ctx=None, refine=True):
    """Largest observed ``Q`` on the normalised slice (a lower bound for the constant).

    Returns
    -------
    dict with ``maxQ``, ``argmax_a``, ``argmax_B``, ``sample_maxQ`` and the
    running maximum ``history`` over the samples.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    ctx = BubbleContext() if ctx is None else ctx
    rng = np.random.default_rng(seed)
    a, B = sample_slice(samples, rng)
    q = np.array([quotient_Q(AffineField(a[i], B[i]), ctx) for i in range(samples)])
    history = np.maximum.accumulate(q)
    i = int(np.argmax(q))
    best_q, best_a, best_B = float(q[i]), a[i], B[i]
    sample_max = best_q
    if refine:
        alpha = np.linalg.norm(best_a)
        phi = math.atan2(best_a[1], best_a[0]) if alpha > 0 else 0.0
        x0 = np.concatenate([[phi, math.asin(np.clip(2.0 * alpha - 1.0, -1.0, 1.0))],
                             (best_B / max(np.linalg.norm(best_B, 2), 1e-300)).ravel()])

        def neg(p):
            aa, BB = _to_slice(p)
            return -quotient_Q(AffineField(aa, BB), ctx)

        res = optimize.minimize(neg, x0, method="Nelder-Mead",
                                options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": 400})
        if -res.fun > best_q:
            best_q = float(-res.fun)
            best_a, best_B = _to_slice(res.x)
    return {
        "maxQ": best_q,
        "argmax_a": np.asarray(best_a).tolist(),
        "argmax_B": np.asarray(best_B).tolist(),
        "sample_maxQ": sample_max,
        "history": history,
    }


def inverse_report(samples, seed, ctx=None, refine=True, config=None):
    """JSON report of the sampling study plus the classical constants."""
    ctx = BubbleContext() if ctx is None else ctx
    est = estimate_C_eq(samples, seed, ctx, refine=refine)
    doc = {
        "samples": int(samples),
        "seed": int(seed),
        "maxQ": est["maxQ"],
        "sample_maxQ": est["sample_maxQ"],
        "argmax_a": est["argmax_a"],
        "argmax_B": est["argmax_B"],
        "classical_constants": {str(k): classical_bubble_constant(k, ctx) for k in (1, 2)},
    }
    if config is not None:
        doc["config"] = config
    return doc


def dumps_report(doc):
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
