"""Independent oracles shared by the unit and acceptance tests."""
import numpy as np
import scipy.sparse as sp

from nsbf.spaces import SolutionState, build_layout, rt_interpolate


def fd_jacobian_error(disc, x, direction, step=1e-7):
    """Relative mismatch between ``J d`` and a central difference of ``R``."""
    _, J = disc.residual_and_jacobian(x)
    Rp, _ = disc.residual_and_jacobian(x + step * direction, jacobian=False)
    Rm, _ = disc.residual_and_jacobian(x - step * direction, jacobian=False)
    fd = (Rp - Rm) / (2 * step)
    Jd = J @ direction
    return float(np.linalg.norm(Jd - fd) / np.linalg.norm(Jd))


def random_state_vector(layout, rng, scale=1.0):
    return scale * rng.normal(size=layout.size)


def divergence_matrix(layout):
    """Cell-wise divergence (times area) of free velocity vectors."""
    mesh = layout.mesh
    gphi = mesh.cell_facet_len[..., None] * mesh.cell_normals  # (N, 3, 2), already times |K|
    D = sp.csr_matrix(gphi.reshape(mesh.n_cells, 6))
    rows = [D[k] @ layout.P[6 * k:6 * k + 6] for k in range(mesh.n_cells)]
    return sp.vstack(rows).toarray()


def divergence_free_field(layout, rng):
    """Random free velocity vector with zero divergence in every cell."""
    B = divergence_matrix(layout)
    v = rng.normal(size=layout.n_u)
    # project onto the kernel of B
    y, *_ = np.linalg.lstsq(B @ B.T, B @ v, rcond=None)
    return v - B.T @ y


def p1_continuous(mesh, rng):
    """Random continuous piecewise-affine function given by vertex values."""
    vals = rng.normal(size=len(mesh.vertices))
    grads = np.empty((mesh.n_cells, 2))
    for k, cell in enumerate(mesh.cells):
        P = mesh.vertices[cell]
        T = np.column_stack([P[1] - P[0], P[2] - P[0]])
        grads[k] = np.linalg.solve(T.T, vals[cell[1:]] - vals[cell[0]])
    return grads


def gradient_pairing(mesh, U, grads):
    """``sum_K int_K grad q . Pi_RT v`` evaluated exactly (RT0 field is affine)."""
    c, a = rt_interpolate(mesh, U)
    mean = c + a[:, None] * mesh.centroid
    return float((mesh.area * np.einsum("nd,nd->n", grads, mean)).sum())


def zero_layout_state(mesh, dirichlet=None):
    lay = build_layout(mesh, dirichlet)
    return lay, SolutionState.zeros(lay)
