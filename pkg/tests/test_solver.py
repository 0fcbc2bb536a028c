import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from nsbf.cases import SmoothCase
from nsbf.forms import Discretization
from nsbf.mesh import build_coarse_mesh, uniform_refine
from nsbf.solver import (
    MinimumNormSolver,
    SaddlePointSolver,
    SingularMatrixError,
    SolverError,
    newton_solve,
    sparse_lu_solve,
)
from nsbf.spaces import ModelParams, SolutionState, build_layout


def test_identity():
    b = np.arange(5.0)
    np.testing.assert_array_equal(sparse_lu_solve(sp.identity(5), b), b)


def test_two_by_two():
    x = sparse_lu_solve(sp.csr_matrix([[2.0, 1.0], [1.0, 3.0]]), np.array([1.0, 2.0]))
    np.testing.assert_allclose(x, [0.2, 0.6], rtol=1e-15)


def test_random_spd_against_dense(rng):
    M = rng.normal(size=(100, 100))
    A = M @ M.T + 100 * np.eye(100)
    b = rng.normal(size=100)
    x = sparse_lu_solve(sp.csr_matrix(A), b)
    ref = np.linalg.solve(A, b)
    assert np.linalg.norm(x - ref) <= 1e-10 * np.linalg.norm(ref)


def test_singular_and_bad_shapes():
    with pytest.raises(SolverError):
        sparse_lu_solve(sp.csr_matrix([[1.0, 1.0], [1.0, 1.0]]), np.ones(2))
    with pytest.raises(SolverError):
        sparse_lu_solve(sp.csr_matrix(np.ones((2, 3))), np.ones(2))


def newton_matrix(mesh, params, rng):
    lay = build_layout(mesh)
    disc = Discretization(lay, params, SmoothCase(params).forcing)
    R, J = disc.residual_and_jacobian(rng.normal(size=lay.size))
    return lay, R, J


@pytest.mark.parametrize("scheme", ["standard", "modified"])
def test_saddle_point_solver_matches_direct(scheme, hanging_mesh, rng):
    lay, R, J = newton_matrix(hanging_mesh, ModelParams(scheme=scheme), rng)
    x = SaddlePointSolver(J, lay.blocks).solve(R)
    ref = spla.spsolve(sp.csc_matrix(J), R)
    assert np.linalg.norm(x - ref) <= 1e-10 * np.linalg.norm(ref)


def test_unpenalised_matrix_is_singular(square2, rng):
    lay, R, J = newton_matrix(square2, ModelParams(theta_stab=0.0), rng)
    with pytest.raises(SingularMatrixError):
        SaddlePointSolver(J, lay.blocks)
    # nullity = interior facets - cells + 1
    s = np.linalg.svd(J.toarray(), compute_uv=False)
    assert np.sum(s <= 1e-10 * s[0]) == len(square2.interior_facets) - square2.n_cells + 1


def test_minimum_norm_solver_against_pinv(square2, rng):
    lay, _, J = newton_matrix(square2, ModelParams(theta_stab=0.0), rng)
    Jd = J.toarray()
    b = Jd @ rng.normal(size=lay.size)  # consistent right-hand side
    x = MinimumNormSolver(J).solve(b)
    ref = np.linalg.pinv(Jd, rcond=1e-12) @ b
    assert np.linalg.norm(x - ref) <= 1e-9 * np.linalg.norm(ref)


def test_zero_forcing_converges_in_one_step(square2):
    lay = build_layout(square2)
    state, report = newton_solve(SolutionState.zeros(lay), ModelParams())
    assert report.converged and report.iterations == 1
    assert not state.vector().any()


def test_newton_smooth_case_quadratic_convergence():
    p = ModelParams()
    mesh = uniform_refine(build_coarse_mesh("unit_square", 2), 2)
    lay = build_layout(mesh, SmoothCase(p).dirichlet)
    state, rep = newton_solve(SolutionState.zeros(lay), p, SmoothCase(p).forcing)
    assert rep.converged and rep.iterations <= 6
    inc = rep.increment_norms
    assert inc[-1] < inc[-2]
    assert rep.residual_norms[-1] <= p.newton_res_tol
    assert abs(mesh.area @ state.p) <= 1e-12


def test_newton_is_deterministic():
    p = ModelParams()
    mesh = uniform_refine(build_coarse_mesh("unit_square", 2))
    lay = build_layout(mesh, SmoothCase(p).dirichlet)
    a = newton_solve(SolutionState.zeros(lay), p, SmoothCase(p).forcing)[0].vector()
    b = newton_solve(SolutionState.zeros(lay), p, SmoothCase(p).forcing)[0].vector()
    np.testing.assert_array_equal(a, b)


def test_singular_policy(square2):
    p = ModelParams(theta_stab=0.0)
    lay = build_layout(square2, SmoothCase(p).dirichlet)
    with pytest.raises(SingularMatrixError):
        newton_solve(SolutionState.zeros(lay), p, SmoothCase(p).forcing)
    state, rep = newton_solve(SolutionState.zeros(lay), p, SmoothCase(p).forcing, singular="minnorm")
    assert rep.converged and rep.minimum_norm_steps == rep.iterations
    with pytest.raises(ValueError):
        newton_solve(SolutionState.zeros(lay), p, singular="maybe")


def test_non_convergence_reported(square2):
    p = ModelParams(max_newton=1)
    lay = build_layout(square2, SmoothCase(p).dirichlet)
    with pytest.raises(SolverError):
        newton_solve(SolutionState.zeros(lay), p, SmoothCase(p).forcing)
    _, rep = newton_solve(SolutionState.zeros(lay), p, SmoothCase(p).forcing, raise_on_failure=False)
    assert not rep.converged and rep.iterations == 1
