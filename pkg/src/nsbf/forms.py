"""Residual and exact Jacobian of the discrete vorticity-velocity-pressure system.

The unknown vector is ``x = (u | w | p | lambda)`` where ``u`` holds the free
CR facet averages, ``w`` the cell vorticities, ``p`` the cell pressures and
``lambda`` the multiplier enforcing a mean-free pressure.  Rows are

* momentum: ``a_h + b_h(.; p) + c_h - F_h`` tested with every free CR basis
  function;
* constitutive: ``sqrt(nu) (rot u_h, theta) - (w_h, theta)``;
* mass: ``-(div u_h, q) + lambda (1, q)``;
* multiplier: ``(p_h, 1)``.

In the ``modified`` scheme the test velocity in the Brinkman, convective,
Forchheimer and load terms is replaced by its cell-wise RT0 interpolant.  The
2D convective term reads ``-(1/sqrt(nu)) (w u_perp, v)`` with
``u_perp = u x w / w = (u_2, -u_1)``.
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .quadrature import gauss_segment, map_to_cells, triangle_rule
from .spaces import SolutionState, velocity_gradients

__all__ = [
    "AssembledSystem",
    "Discretization",
    "assemble",
    "broken_norm",
    "kernel_losses",
    "penalty_energy",
    "dump_matrix",
]


@dataclass(frozen=True)
class AssembledSystem:
    residual: np.ndarray
    jacobian: sp.csr_matrix
    blocks: dict


def _local_block(idx_r, idx_c, mats, shape):
    """Scatter a batch of dense local matrices into a COO matrix."""
    B, m, k = mats.shape
    rows = np.broadcast_to(idx_r[:, :, None], (B, m, k)).ravel()
    cols = np.broadcast_to(idx_c[:, None, :], (B, m, k)).ravel()
    return sp.coo_matrix((mats.ravel(), (rows, cols)), shape=shape).tocsr()


def cr_basis_at(rule):
    """CR basis values ``1 - 2 lambda_i`` at the rule's points, (nq, 3)."""
    return 1.0 - 2.0 * rule.bary


def test_fields(mesh, rule, scheme):
    """Test velocities at quadrature points, shape (N, nq, 6, 2).

    Local test index ``2 i + c`` is the CR function ``phi_i e_c`` (standard)
    or its RT0 interpolant ``n_{i,c} h_i / (2|K|) (x - X_i)`` (modified).
    """
    N = mesh.n_cells
    nq = len(rule)
    T = np.zeros((N, nq, 3, 2, 2))
    if scheme == "standard":
        phi = cr_basis_at(rule)
        for c in range(2):
            T[:, :, :, c, c] = phi[None]
    else:
        x = map_to_cells(rule, mesh.cell_verts)  # (N, nq, 2)
        s = mesh.cell_facet_len / (2.0 * mesh.area[:, None])  # (N, 3)
        rel = x[:, :, None, :] - mesh.cell_verts[:, None, :, :]  # (N, nq, 3, 2)
        for c in range(2):
            T[:, :, :, c, :] = (mesh.cell_normals[:, None, :, c, None] * s[:, None, :, None]) * rel
    return T.reshape(N, nq, 6, 2)


class Discretization:
    """Mesh-, parameter- and load-dependent assembly data.

    Parameters
    ----------
    layout : DofLayout
    params : ModelParams
    forcing : callable or None
        Maps points (M, 2) to the body force (M, 2).
    """

    def __init__(self, layout, params, forcing=None, load_rule="poly6"):
        self.layout = layout
        self.params = params
        mesh = layout.mesh
        self.mesh = mesh
        N = mesh.n_cells
        self.N = N
        scheme = params.scheme
        area = mesh.area
        sq = np.sqrt(params.nu)

        gphi = mesh.cell_facet_len[..., None] * mesh.cell_normals / area[:, None, None]
        # rot(phi_i e_1) = -d_y phi_i, rot(phi_i e_2) = d_x phi_i
        rot = np.stack([-gphi[..., 1], gphi[..., 0]], axis=2).reshape(N, 6)
        div = gphi.reshape(N, 6)
        self.rot_vec = rot
        self.div_vec = div

        # nonlinear-term quadrature
        self.rule = triangle_rule("poly4")
        self.phi_q = cr_basis_at(self.rule)  # (nq, 3)
        self.wq = self.rule.weights[None, :] * area[:, None]  # (N, nq)
        self.T = test_fields(mesh, self.rule, scheme)  # (N, nq, 6, 2)

        # Brinkman: (1/kappa) int phi_i e_d . T_a  -> (N, 6, 6) [test a, trial b]
        trial = np.zeros((len(self.rule), 3, 2, 2))
        for d in range(2):
            trial[:, :, d, d] = self.phi_q
        self.trial_q = trial.reshape(len(self.rule), 6, 2)
        Mb = np.einsum("nq,nqad,qbd->nab", self.wq, self.T, self.trial_q) / params.kappa

        loc = np.arange(6 * N).reshape(N, 6)
        self.loc = loc
        L = _local_block(loc, loc, Mb, (6 * N, 6 * N))
        L = L + self._penalty_local()
        self.L_lin = L.tocsr()

        cells = np.arange(N)
        # momentum coupling to w and p, per cell (6N x N)
        self.Rw = sp.csr_matrix(
            ((sq * area[:, None] * rot).ravel(), (loc.ravel(), np.repeat(cells, 6))), shape=(6 * N, N)
        )
        self.Rp = sp.csr_matrix(
            ((-area[:, None] * div).ravel(), (loc.ravel(), np.repeat(cells, 6))), shape=(6 * N, N)
        )
        P = layout.P
        self.P = P
        self.PT = P.T.tocsr()
        self.A_uu = (self.PT @ self.L_lin @ P).tocsr()
        self.A_uw = (self.PT @ self.Rw).tocsr()
        self.A_up = (self.PT @ self.Rp).tocsr()
        self.A_wu = self.A_uw.T.tocsr()
        self.A_pu = self.A_up.T.tocsr()
        self.area = area

        self.load_loc = np.zeros(6 * N)
        if forcing is not None:
            lr = triangle_rule(load_rule)
            Tl = test_fields(mesh, lr, scheme)
            x = map_to_cells(lr, mesh.cell_verts)
            fv = np.asarray(forcing(x.reshape(-1, 2)), dtype=float).reshape(N, len(lr), 2)
            wl = lr.weights[None, :] * area[:, None]
            self.load_loc = np.einsum("nq,nqad,nqd->na", wl, Tl, fv).ravel()

    # -- penalty -----------------------------------------------------------
    def _penalty_matrices(self):
        """Facet-local jump operators (F, nq, 12, 2), weights and Q_F."""
        mesh = self.mesh
        f = mesh.interior_facets
        t, w = gauss_segment(2)
        a = mesh.vertices[mesh.facets[f, 0]]
        b = mesh.vertices[mesh.facets[f, 1]]
        x = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]  # (F, nq, 2)
        nq = len(t)
        Dphi = np.zeros((len(f), nq, 2, 3, 2, 2))
        for s, sign in ((0, 1.0), (1, -1.0)):
            cells = mesh.facet_cells[f, s]
            lam = mesh.barycentric(np.repeat(cells, nq), x.reshape(-1, 2)).reshape(len(f), nq, 3)
            phi = 1.0 - 2.0 * lam
            for c in range(2):
                Dphi[:, :, s, :, c, c] = sign * phi
        Dphi = Dphi.reshape(len(f), nq, 12, 2)
        return f, x, Dphi, w

    def _penalty_local(self, theta=None):
        mesh = self.mesh
        prm = self.params
        theta = prm.theta_stab if theta is None else theta
        f, _, Dphi, w = self._penalty_matrices()
        n = mesh.normal[f]
        tan = np.column_stack([-n[:, 1], n[:, 0]])
        Q = prm.nu * np.einsum("fi,fj->fij", tan, tan) + np.einsum("fi,fj->fij", n, n)
        # theta/h_F * int_F = theta * sum_q w_q
        Mf = theta * np.einsum("q,fqai,fij,fqbj->fab", w, Dphi, Q, Dphi)
        c0 = mesh.facet_cells[f, 0]
        c1 = mesh.facet_cells[f, 1]
        idx = np.concatenate([self.loc[c0], self.loc[c1]], axis=1)
        N = mesh.n_cells
        return _local_block(idx, idx, Mf, (6 * N, 6 * N))

    # -- evaluation ----------------------------------------------------------
    def split(self, x):
        b = self.layout.blocks
        return x[b["u"]], x[b["w"]], x[b["p"]], x[b["lam"]][0]

    def residual_and_jacobian(self, x, jacobian=True):
        prm = self.params
        lay = self.layout
        N = self.N
        u, w, p, lam = self.split(np.asarray(x, dtype=float))
        Uloc = self.P @ u + lay.g  # (6N,)
        U = Uloc.reshape(N, 6)
        uq = np.einsum("qb,nb->nq", self.phi_q, U.reshape(N, 3, 2)[..., 0]), np.einsum(
            "qb,nb->nq", self.phi_q, U.reshape(N, 3, 2)[..., 1]
        )
        uq = np.stack(uq, axis=2)  # (N, nq, 2)
        speed = np.sqrt((uq**2).sum(axis=2))
        isq = 1.0 / np.sqrt(prm.nu)
        uperp = np.stack([uq[..., 1], -uq[..., 0]], axis=2)

        # nonlinear local residuals
        TF = prm.forchheimer * np.einsum("nq,nqad,nqd->na", self.wq * speed, self.T, uq)
        TC = -isq * np.einsum("nq,nqad,nqd->na", self.wq * w[:, None], self.T, uperp)
        r_loc = self.L_lin @ Uloc + (TF + TC).ravel() - self.load_loc
        r_loc += self.Rw @ w + self.Rp @ p
        R_u = self.PT @ r_loc
        sq = np.sqrt(prm.nu)
        R_w = sq * self.area * np.einsum("na,na->n", self.rot_vec, U) - self.area * w
        R_p = -self.area * np.einsum("na,na->n", self.div_vec, U) + self.area * lam
        R_l = np.array([self.area @ p])
        R = np.concatenate([R_u, R_w, R_p, R_l])
        if not np.all(np.isfinite(R)):
            raise FloatingPointError("non-finite residual")
        if not jacobian:
            return R, None

        # Forchheimer: d(|u| u) = |u| I + u u^T / |u|
        safe = np.where(speed > 0, speed, 1.0)
        outer = np.where((speed > 0)[..., None, None], uq[..., :, None] * uq[..., None, :] / safe[..., None, None], 0.0)
        Dfor = speed[..., None, None] * np.eye(2) + outer  # (N, nq, 2, 2)
        JF = prm.forchheimer * np.einsum("nq,nqai,nqij,qbj->nab", self.wq, self.T, Dfor, self.trial_q)
        # convective wrt u: -isq * w * (delta u)_perp . T ; perp(e_1) = (0,-1), perp(e_2) = (1,0)
        perp = np.array([[0.0, 1.0], [-1.0, 0.0]])  # perp(v) = perp @ v
        JCu = -isq * np.einsum("nq,nqai,ij,qbj->nab", self.wq * w[:, None], self.T, perp, self.trial_q)
        JCw = -isq * np.einsum("nq,nqad,nqd->na", self.wq, self.T, uperp)  # (N, 6)
        cells = np.arange(N)
        L_nl = _local_block(self.loc, self.loc, JF + JCu, (6 * N, 6 * N))
        J_uu = self.A_uu + self.PT @ L_nl @ self.P
        J_uw = self.A_uw + self.PT @ sp.csr_matrix(
            (JCw.ravel(), (self.loc.ravel(), np.repeat(cells, 6))), shape=(6 * N, N)
        )
        Dw = sp.diags(-self.area)
        col = sp.csr_matrix(self.area[:, None])
        J = sp.bmat(
            [
                [J_uu, J_uw, self.A_up, None],
                [self.A_wu, Dw, None, None],
                [self.A_pu, None, None, col],
                [None, None, col.T, None],
            ],
            format="csr",
        )
        return R, J

    def assemble(self, state):
        R, J = self.residual_and_jacobian(state.vector())
        return AssembledSystem(R, J, self.layout.blocks)


def assemble(state, params, forcing=None):
    """Residual and Jacobian at ``state`` (builds a fresh Discretization)."""
    disc = Discretization(state.layout, params, forcing)
    return disc.assemble(state)


def penalty_energy(mesh, U, params):
    """Jump-penalty energy ``sum_F theta/h_F int_F (nu [u x n]^2 + [u.n]^2)``."""
    jt, jn, w, _ = facet_jumps(mesh, U)
    return float(params.theta_stab * (w * (params.nu * jt**2 + jn**2)).sum())


def facet_jumps(mesh, U, npts=2):
    """Tangential and normal jumps of a CR field on interior facets.

    Returns ``(jt, jn, w, h)`` with ``jt, jn`` of shape (F, npts), Gauss
    weights ``w`` (normalised to 1) and facet lengths ``h``.
    """
    f = mesh.interior_facets
    t, w = gauss_segment(npts)
    a = mesh.vertices[mesh.facets[f, 0]]
    b = mesh.vertices[mesh.facets[f, 1]]
    x = (a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]).reshape(-1, 2)
    vals = []
    for s in range(2):
        cells = np.repeat(mesh.facet_cells[f, s], npts)
        lam = mesh.barycentric(cells, x)
        vals.append(np.einsum("mi,mid->md", 1.0 - 2.0 * lam, U[cells]))
    d = (vals[0] - vals[1]).reshape(len(f), npts, 2)
    n = mesh.normal[f]
    tan = np.column_stack([-n[:, 1], n[:, 0]])
    jn = np.einsum("fqd,fd->fq", d, n)
    jt = np.einsum("fqd,fd->fq", d, tan)
    return jt, jn, w[None, :], mesh.h_F[f]


def broken_norm(layout, U, params, u_exact=None, rot_exact=None, div_exact=None, rule="poly6"):
    """Broken energy norm of ``u - u_h`` (or of ``u_h`` if no exact field).

    ``U`` are local CR coefficients (N, 3, 2); the exact callables map points
    (M, 2) to values.  Facet jumps use only the discrete field since the
    exact velocity is continuous.
    """
    mesh = layout.mesh
    r = triangle_rule(rule)
    N = mesh.n_cells
    x = map_to_cells(r, mesh.cell_verts)
    phi = cr_basis_at(r)
    uq = np.einsum("qi,nid->nqd", phi, U)
    G = velocity_gradients(mesh, U)
    rot_h = G[:, 1, 0] - G[:, 0, 1]
    div_h = G[:, 0, 0] + G[:, 1, 1]
    eu = -uq
    erot = -np.broadcast_to(rot_h[:, None], (N, len(r))).copy()
    ediv = -np.broadcast_to(div_h[:, None], (N, len(r))).copy()
    xf = x.reshape(-1, 2)
    if u_exact is not None:
        eu = eu + np.asarray(u_exact(xf)).reshape(N, len(r), 2)
    if rot_exact is not None:
        erot = erot + np.asarray(rot_exact(xf)).reshape(N, len(r))
    if div_exact is not None:
        ediv = ediv + np.asarray(div_exact(xf)).reshape(N, len(r))
    wq = r.weights[None, :] * mesh.area[:, None]
    vol = (wq * ((eu**2).sum(axis=2) / params.kappa + params.nu * erot**2 + ediv**2)).sum()
    jt, jn, w, h = facet_jumps(mesh, U)
    # (1/h_F) int_F = sum_q w_q
    jump = (w * (params.nu * jt**2 + jn**2)).sum()
    return float(np.sqrt(vol + jump))


def kernel_losses(state, nu=1.0):
    """``(max_K |div u_h|, max_K |sqrt(nu) rot u_h - w_h|)``."""
    mesh = state.mesh
    G = velocity_gradients(mesh, state.local_u())
    div = G[:, 0, 0] + G[:, 1, 1]
    rot = G[:, 1, 0] - G[:, 0, 1]
    if mesh.n_cells == 0:
        return 0.0, 0.0
    return float(np.abs(div).max()), float(np.abs(np.sqrt(nu) * rot - state.w).max())


def dump_matrix(A):
    """Coordinate text dump ``row col value`` of a sparse matrix."""
    A = sp.coo_matrix(A)
    return "".join(f"{i} {j} {v:.17g}\n" for i, j, v in zip(A.row, A.col, A.data))
