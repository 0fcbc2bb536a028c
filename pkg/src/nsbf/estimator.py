"""Explicit residual a posteriori error estimator and effectivity index."""
from dataclasses import dataclass

import numpy as np

from .forms import broken_norm, cr_basis_at
from .quadrature import map_to_cells, triangle_rule
from .spaces import velocity_gradients

__all__ = ["EstimatorReport", "eta_local", "eta_global", "exact_errors", "effectivity", "estimate"]


@dataclass
class EstimatorReport:
    eta_local: np.ndarray
    eta_global: float
    effectivity: float
    error_u_h: float
    error_w: float
    error_p: float


def eta_local(state, params, forcing, rule="poly4"):
    """Local indicators ``eta(K)`` for every cell.

    ``eta(K)^2 = |K| ||f - u_h/kappa + nu^(-1/2) u_h x w_h - F |u_h| u_h||_K^2
    + |K|^(1/2) sum_F ||[D u_h] tau_F||_F^2`` where ``D`` is the symmetric
    gradient, ``tau_F`` the unit facet tangent and the facet sum runs over the
    interior (and hanging child) facets of ``K``; boundary facets add nothing.
    """
    mesh = state.mesh
    N = mesh.n_cells
    U = state.local_u()
    r = triangle_rule(rule)
    x = map_to_cells(r, mesh.cell_verts)
    uq = np.einsum("qi,nid->nqd", cr_basis_at(r), U)
    w = state.w[:, None]
    u_cross_w = w[..., None] * np.stack([uq[..., 1], -uq[..., 0]], axis=-1)
    speed = np.linalg.norm(uq, axis=-1)
    fq = np.zeros_like(uq) if forcing is None else np.asarray(forcing(x.reshape(-1, 2))).reshape(N, len(r), 2)
    res = fq - uq / params.kappa + u_cross_w / np.sqrt(params.nu) - params.forchheimer * speed[..., None] * uq
    wq = r.weights[None, :] * mesh.area[:, None]
    vol = mesh.area * (wq * (res**2).sum(axis=2)).sum(axis=1)

    G = velocity_gradients(mesh, U)
    G = 0.5 * (G + G.transpose(0, 2, 1))
    f = mesh.interior_facets
    n = mesh.normal[f]
    tau = np.column_stack([-n[:, 1], n[:, 0]])
    c0, c1 = mesh.facet_cells[f, 0], mesh.facet_cells[f, 1]
    jump = np.einsum("fcd,fd->fc", G[c0] - G[c1], tau)
    fac = mesh.h_F[f] * (jump**2).sum(axis=1)
    facet_sum = np.bincount(c0, fac, minlength=N) + np.bincount(c1, fac, minlength=N)
    eta2 = vol + np.sqrt(mesh.area) * facet_sum
    return np.sqrt(eta2)


def eta_global(eta):
    return float(np.sqrt(np.sum(np.asarray(eta) ** 2)))


def exact_errors(state, params, case, rule="poly6"):
    """``(||u - u_h||_h, ||w - w_h||_0, ||p - p_h||_0)`` against ``case``."""
    layout = state.layout
    mesh = layout.mesh
    U = state.local_u()
    err_u = broken_norm(layout, U, params, u_exact=case.velocity, rot_exact=case.rot_velocity)
    r = triangle_rule(rule)
    x = map_to_cells(r, mesh.cell_verts).reshape(-1, 2)
    wq = r.weights[None, :] * mesh.area[:, None]
    N = mesh.n_cells
    ew = case.vorticity(x).reshape(N, -1) - state.w[:, None]
    ep = case.pressure(x).reshape(N, -1) - case.pressure_mean() - state.p[:, None]
    return err_u, float(np.sqrt((wq * ew**2).sum())), float(np.sqrt((wq * ep**2).sum()))


def effectivity(state, case, params, forcing=None, eta=None):
    """Total error divided by the global estimator."""
    if eta is None:
        eta = eta_local(state, params, forcing if forcing is not None else case.forcing)
    eg = eta_global(eta)
    total = sum(exact_errors(state, params, case))
    if eg == 0.0:
        if total == 0.0:
            return 0.0
        raise ZeroDivisionError("estimator vanishes while the error does not")
    return total / eg


def estimate(state, params, case):
    """Full report: local and global indicators, errors and effectivity."""
    eta = eta_local(state, params, case.forcing)
    eu, ew, ep = exact_errors(state, params, case)
    eg = eta_global(eta)
    eff = (eu + ew + ep) / eg if eg > 0 else 0.0
    return EstimatorReport(eta, eg, eff, eu, ew, ep)
