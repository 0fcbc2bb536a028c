"""Crouzeix-Raviart / P0 / P0 degree-of-freedom layouts and interpolation.

Velocity unknowns are facet averages of both components on every free
facet (interior facets and hanging children).  A coarse cell sees its hanging
parent facet through the constraint ``parent = (child1 + child2) / 2``; a
boundary facet carries the facet average of the Dirichlet data.  The local
coefficients of cell ``K`` are ``U_K = P @ u + g`` reshaped to ``(3, 2)``,
ordered by the facet opposite local vertex ``i``.

On a cell the CR basis function attached to facet ``i`` is
``phi_i = 1 - 2 * lambda_i`` with gradient ``h_i n_i / |K|``.
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .mesh import BOUNDARY, HANGING, INTERIOR
from .quadrature import gauss_segment, graded_segment

__all__ = [
    "ModelParams",
    "DofLayout",
    "SolutionState",
    "build_layout",
    "facet_average",
    "cr_interpolate",
    "rt_interpolate",
    "rt_evaluate",
    "evaluate_velocity",
    "velocity_gradients",
]


@dataclass(frozen=True)
class ModelParams:
    """Physical constants, penalty and Newton tolerances."""

    nu: float = 1.0
    kappa: float = 1.0
    forchheimer: float = 1.0
    theta_stab: float = 10.0
    newton_inc_tol: float = 1e-8
    newton_res_tol: float = 1e-12
    max_newton: int = 20
    scheme: str = "modified"

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError("nu must be positive")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if self.forchheimer < 0:
            raise ValueError("forchheimer must be non-negative")
        if self.theta_stab < 0:
            raise ValueError("theta_stab must be non-negative")
        if self.max_newton < 1:
            raise ValueError("max_newton must be a positive integer")
        if self.scheme not in ("standard", "modified"):
            raise ValueError("scheme must be 'standard' or 'modified'")


def facet_average(mesh, facet_ids, func, npts=3, graded=False):
    """Average of a vector field over the given facets (Gauss-Legendre).

    With ``graded=True`` a composite rule refined geometrically towards both
    facet ends is used, which stays accurate for fields with an algebraic
    singularity at a facet vertex (e.g. a re-entrant corner).
    """
    facet_ids = np.asarray(facet_ids, dtype=int)
    if len(facet_ids) == 0:
        return np.zeros((0, 2))
    t, w = graded_segment(npts) if graded else gauss_segment(npts)
    a = mesh.vertices[mesh.facets[facet_ids, 0]]
    b = mesh.vertices[mesh.facets[facet_ids, 1]]
    x = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
    vals = np.asarray(func(x.reshape(-1, 2)), dtype=float).reshape(len(facet_ids), len(t), 2)
    return np.einsum("q,fqd->fd", w, vals)


@dataclass(eq=False)
class DofLayout:
    """Constrained dof maps for (u, w, p, lambda) on one mesh."""

    mesh: object
    free_index: np.ndarray  # facet -> free facet number or -1
    P: sp.csr_matrix  # (6N, n_u)
    g: np.ndarray  # (6N,)
    constraints: dict  # constrained dof (2*facet+c) -> [(master dof, coeff), ...]
    dirichlet: dict  # boundary dof (2*facet+c) -> value
    n_u: int
    n_cells: int = field(init=False)

    def __post_init__(self):
        self.n_cells = self.mesh.n_cells

    @property
    def size(self):
        return self.n_u + 2 * self.n_cells + 1

    @property
    def blocks(self):
        """Slices of the (u | w | p | lambda) blocks in the global vector."""
        nu, n = self.n_u, self.n_cells
        return {
            "u": slice(0, nu),
            "w": slice(nu, nu + n),
            "p": slice(nu + n, nu + 2 * n),
            "lam": slice(nu + 2 * n, nu + 2 * n + 1),
        }

    def local(self, u):
        """Local CR coefficients (N, 3, 2) of a free velocity vector."""
        return (self.P @ u + self.g).reshape(-1, 3, 2)

    def local_homogeneous(self, u):
        return (self.P @ u).reshape(-1, 3, 2)


def build_layout(mesh, dirichlet_data=None, npts=10):
    """Dof layout with hanging constraints and Dirichlet facet averages.

    Parameters
    ----------
    dirichlet_data : callable or None
        Maps points (M, 2) to values (M, 2); ``None`` means homogeneous data.
    npts : int
        Gauss points per subinterval of the graded boundary-facet rule used
        for the Dirichlet averages.  Accurate averages keep the discrete net
        boundary flux at round-off level, which the mean-value multiplier
        would otherwise absorb as a uniform divergence.
    """
    E = mesh.n_facets
    kind = mesh.facet_kind
    free = np.flatnonzero(kind == INTERIOR)
    free_index = -np.ones(E, dtype=int)
    free_index[free] = np.arange(len(free))
    n_u = 2 * len(free)

    bnd = np.flatnonzero(kind == BOUNDARY)
    bvals = np.zeros((E, 2))
    if dirichlet_data is not None and len(bnd):
        bvals[bnd] = facet_average(mesh, bnd, dirichlet_data, npts, graded=True)

    rows, cols, vals = [], [], []
    g = np.zeros(6 * mesh.n_cells)
    cf = mesh.cell_facets
    for i in range(3):
        f = cf[:, i]
        k = kind[f]
        for c in range(2):
            r = 6 * np.arange(mesh.n_cells) + 2 * i + c
            m = k == INTERIOR
            rows.append(r[m])
            cols.append(2 * free_index[f[m]] + c)
            vals.append(np.ones(m.sum()))
            m = k == BOUNDARY
            g[r[m]] = bvals[f[m], c]
            m = k == HANGING
            if m.any():
                kids = np.array([mesh.hanging[int(p)] for p in f[m]])
                for j in range(2):
                    rows.append(r[m])
                    cols.append(2 * free_index[kids[:, j]] + c)
                    vals.append(np.full(m.sum(), 0.5))
    P = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(6 * mesh.n_cells, n_u),
    )
    constraints = {}
    for p, (c1, c2) in mesh.hanging.items():
        for c in range(2):
            constraints[2 * p + c] = [
                (2 * free_index[c1] + c, 0.5),
                (2 * free_index[c2] + c, 0.5),
            ]
    dirichlet = {2 * int(f) + c: float(bvals[f, c]) for f in bnd for c in range(2)}
    return DofLayout(mesh, free_index, P, g, constraints, dirichlet, n_u)


@dataclass(eq=False)
class SolutionState:
    """Coefficient vectors of (u_h, w_h, p_h, lambda) on one layout."""

    layout: DofLayout
    u: np.ndarray
    w: np.ndarray
    p: np.ndarray
    lam: float = 0.0

    @classmethod
    def zeros(cls, layout):
        n = layout.n_cells
        return cls(layout, np.zeros(layout.n_u), np.zeros(n), np.zeros(n), 0.0)

    @classmethod
    def from_vector(cls, layout, x):
        b = layout.blocks
        x = np.asarray(x, dtype=float)
        if x.shape != (layout.size,):
            raise ValueError(f"vector of length {x.shape} does not match layout size {layout.size}")
        return cls(layout, x[b["u"]].copy(), x[b["w"]].copy(), x[b["p"]].copy(), float(x[b["lam"]][0]))

    def vector(self):
        return np.concatenate([self.u, self.w, self.p, [self.lam]])

    @property
    def mesh(self):
        return self.layout.mesh

    def local_u(self):
        return self.layout.local(self.u)

    def velocity(self, cell_ids, x):
        return evaluate_velocity(self.layout.mesh, self.local_u(), cell_ids, x)


def evaluate_velocity(mesh, U, cell_ids, x):
    """Evaluate piecewise affine CR fields ``U`` (N, 3, 2) at points ``x``."""
    lam = mesh.barycentric(cell_ids, x)
    return np.einsum("mi,mid->md", 1.0 - 2.0 * lam, U[cell_ids])


def velocity_gradients(mesh, U):
    """Cell-wise gradients (N, 2, 2) with ``G[K, c, d] = d u_c / d x_d``."""
    gphi = mesh.cell_facet_len[..., None] * mesh.cell_normals / mesh.area[:, None, None]
    return np.einsum("nic,nid->ncd", U, gphi)


def cr_interpolate(layout, func, npts=3):
    """Free velocity coefficients holding the facet averages of ``func``."""
    mesh = layout.mesh
    free = np.flatnonzero(layout.free_index >= 0)
    avg = facet_average(mesh, free, func, npts)
    u = np.zeros(layout.n_u)
    u[0::2] = avg[:, 0]
    u[1::2] = avg[:, 1]
    return u


def rt_interpolate(mesh, U):
    """Cell-wise RT0 interpolant ``c_K + a_K x`` of local CR coefficients.

    The normal flux average of a CR field on facet ``i`` of ``K`` is
    ``U_i . n_i`` because its facet average equals the facet dof.

    Returns
    -------
    c : ndarray (N, 2)
    a : ndarray (N,)
    """
    flux = np.einsum("nid,nid->ni", U, mesh.cell_normals)
    s = flux * mesh.cell_facet_len / (2.0 * mesh.area[:, None])
    a = s.sum(axis=1)
    c = -np.einsum("ni,nid->nd", s, mesh.cell_verts)
    return c, a


def rt_evaluate(c, a, cell_ids, x):
    return c[cell_ids] + a[cell_ids, None] * x
