"""Full-step Newton iteration with sparse direct linear solves.

The Newton matrix has the block structure (velocity u, vorticity w, pressure
p, mean-value multiplier lambda)::

    [ J_uu  J_uw  J_up  0 ]
    [ J_wu  D     0     0 ]
    [ J_pu  0     0     c ]
    [ 0     0     c^T   0 ]

with ``D`` diagonal and ``c`` the cell areas.  It is solved exactly by
(i) eliminating ``w`` cell by cell, (ii) removing the multiplier through the
null vector ``1_p`` of the remaining saddle-point block and pinning one
pressure, (iii) one sparse LU factorisation of the reduced (u, p) system and
(iv) shifting the pressure so that the multiplier row holds.  Keeping the
dense multiplier row and column out of the factorisation keeps the LU fill
local.

A vanishing jump penalty makes the Newton matrix singular (but the system
stays consistent); :func:`newton_solve` can then take minimum-norm steps,
see :class:`MinimumNormSolver`.
"""
from dataclasses import dataclass, field
import logging

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .forms import Discretization
from .spaces import SolutionState

__all__ = [
    "NewtonReport",
    "SolverError",
    "SingularMatrixError",
    "SaddlePointSolver",
    "MinimumNormSolver",
    "sparse_lu_solve",
    "newton_solve",
]

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Linear factorisation failure or Newton non-convergence."""


class SingularMatrixError(SolverError):
    """Exactly zero or negligible pivot in the factorisation."""


@dataclass
class NewtonReport:
    iterations: int = 0
    increment_norms: list = field(default_factory=list)
    residual_norms: list = field(default_factory=list)
    converged: bool = False
    minimum_norm_steps: int = 0


def _factorize(A):
    A = sp.csc_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise SolverError("matrix must be square")
    try:
        return spla.splu(A, permc_spec="COLAMD")
    except RuntimeError as exc:  # "Factor is exactly singular"
        raise SingularMatrixError(str(exc)) from exc


def sparse_lu_solve(A, b):
    """Solve ``A x = b`` with a sparse LU factorisation (SuperLU, COLAMD).

    Raises
    ------
    SolverError
        If the factorisation hits an exactly singular pivot.
    """
    x = _factorize(A).solve(np.asarray(b, dtype=float))
    if not np.all(np.isfinite(x)):
        raise SolverError("non-finite solution")
    return x


class SaddlePointSolver:
    """Exact direct solver for Newton matrices with the block layout above.

    Parameters
    ----------
    J : sparse matrix
        Full Newton matrix in (u | w | p | lambda) ordering.
    blocks : dict
        Slices ``"u"``, ``"w"``, ``"p"``, ``"lam"`` (see ``DofLayout.blocks``).
    refine_tol : float
        Relative residual above which one step of iterative refinement with
        the same factorisation is applied.
    pivot_tol : float
        Pivots of the reduced system below ``pivot_tol`` times the largest one
        flag a numerically singular matrix.
    """

    def __init__(self, J, blocks, refine_tol=1e-12, pivot_tol=1e-12):
        J = sp.csr_matrix(J)
        self.J = J
        iu, iw, ip = blocks["u"], blocks["w"], blocks["p"]
        self.iu, self.iw, self.ip = iu, iw, ip
        self.il = blocks["lam"].start
        self.refine_tol = refine_tol
        Ju, Jw, Jp = J[iu], J[iw], J[ip]
        Jww = Jw[:, iw]
        D = Jww.diagonal()
        if np.any(D == 0) or Jww.nnz > np.count_nonzero(D) or Jp[:, ip].nnz:
            raise SolverError("matrix does not have the expected block structure")
        self.Dinv = 1.0 / D
        self.J_uw = Ju[:, iw]
        self.J_wu = Jw[:, iu]
        S = Ju[:, iu] - self.J_uw @ sp.diags(self.Dinv) @ self.J_wu
        self.c = Jp[:, [self.il]].toarray().ravel()
        if np.any(self.c <= 0):
            raise SolverError("multiplier column must hold positive cell weights")
        self.nu = iu.stop - iu.start
        self.npr = ip.stop - ip.start
        K = sp.bmat([[S, Ju[:, ip]], [Jp[:, iu], None]], format="csr")
        # pin the first pressure: drop its row (redundant) and column (gauge)
        self.keep = np.r_[0 : self.nu, self.nu + 1 : self.nu + self.npr]
        self.lu = _factorize(K[self.keep][:, self.keep])
        piv = np.abs(self.lu.U.diagonal())
        if piv.size and piv.min() <= pivot_tol * piv.max():
            raise SingularMatrixError(f"pivot ratio {piv.min() / piv.max():.1e} below {pivot_tol:.0e}")

    def _solve_once(self, b):
        bu, bw, bp, bl = b[self.iu], b[self.iw], b[self.ip], b[self.il]
        Dw = self.Dinv * bw
        # the pressure rows of the saddle block sum to zero: this fixes lambda
        lam = bp.sum() / self.c.sum()
        rhs = np.concatenate([bu - self.J_uw @ Dw, bp - self.c * lam])
        y = np.zeros(self.nu + self.npr)
        y[self.keep] = self.lu.solve(rhs[self.keep])
        du, dp = y[: self.nu], y[self.nu :]
        dp = dp + (bl - self.c @ dp) / self.c.sum()
        x = np.empty_like(b)
        x[self.iu] = du
        x[self.iw] = Dw - self.Dinv * (self.J_wu @ du)
        x[self.ip] = dp
        x[self.il] = lam
        return x

    def solve(self, b):
        """Return ``x`` with ``J x = b``."""
        b = np.asarray(b, dtype=float)
        x = self._solve_once(b)
        scale = max(float(np.abs(b).max()), np.finfo(float).tiny)
        r = b - self.J @ x
        if np.abs(r).max() > self.refine_tol * scale:
            x = x + self._solve_once(r)
        if not np.all(np.isfinite(x)):
            raise SolverError("non-finite solution")
        return x


class MinimumNormSolver:
    """Minimum-norm solutions of consistent singular systems ``J x = b``.

    Iterated Tikhonov regularisation: every step solves the quasi-definite
    system ``[[I, J^T], [J, -delta I]] [dx; y] = [0; r]``, whose ``dx`` part is
    ``J^T (J J^T + delta I)^(-1) r``.  Starting from zero the iterates stay in
    the row space of ``J`` and converge to the pseudo-inverse solution.
    """

    def __init__(self, J, rel_shift=1e-16, tol=1e-13, max_steps=10):
        J = sp.csr_matrix(J)
        n = J.shape[0]
        self.J = J
        self.n = n
        self.tol = tol
        self.max_steps = max_steps
        delta = rel_shift * spla.norm(J, 1) ** 2
        A = sp.bmat([[sp.identity(n), J.T], [J, -delta * sp.identity(n)]], format="csc")
        self.lu = _factorize(A)

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        scale = max(float(np.abs(b).max()), np.finfo(float).tiny)
        x = np.zeros(self.n)
        pad = np.zeros(self.n)
        for _ in range(self.max_steps):
            r = b - self.J @ x
            if np.abs(r).max() <= self.tol * scale:
                break
            x += self.lu.solve(np.concatenate([pad, r]))[: self.n]
        if not np.all(np.isfinite(x)):
            raise SolverError("non-finite solution")
        return x


def newton_solve(initial, params, forcing=None, disc=None, raise_on_failure=True, singular="raise"):
    """Solve the nonlinear discrete problem from ``initial``.

    Stops once the l2 norm of the increment is below ``newton_inc_tol`` and
    the l-infinity norm of the residual at the new iterate is below
    ``newton_res_tol``.

    Parameters
    ----------
    singular : {"raise", "minnorm"}
        What to do when the Newton matrix is singular: raise
        :class:`SingularMatrixError`, or take the minimum-norm step (the
        discrete problem without jump penalty has a non-trivial kernel).

    Returns
    -------
    (SolutionState, NewtonReport)
    """
    if singular not in ("raise", "minnorm"):
        raise ValueError("singular must be 'raise' or 'minnorm'")
    layout = initial.layout
    if disc is None:
        disc = Discretization(layout, params, forcing)
    elif disc.layout is not layout:
        raise ValueError("discretization belongs to a different layout")
    x = initial.vector()
    report = NewtonReport()
    R, J = disc.residual_and_jacobian(x)
    for it in range(1, params.max_newton + 1):
        try:
            dx = SaddlePointSolver(J, layout.blocks).solve(-R)
        except SingularMatrixError:
            if singular == "raise":
                raise
            if not report.minimum_norm_steps:
                log.warning("singular Newton matrix; taking minimum-norm steps")
            report.minimum_norm_steps += 1
            dx = MinimumNormSolver(J).solve(-R)
        x = x + dx
        R, J = disc.residual_and_jacobian(x)
        inc = float(np.linalg.norm(dx))
        res = float(np.abs(R).max()) if len(R) else 0.0
        report.iterations = it
        report.increment_norms.append(inc)
        report.residual_norms.append(res)
        log.debug("newton %d: |dx|=%.3e |R|=%.3e", it, inc, res)
        if inc <= params.newton_inc_tol and res <= params.newton_res_tol:
            report.converged = True
            break
    state = SolutionState.from_vector(layout, x)
    if not report.converged and raise_on_failure:
        raise SolverError(
            f"Newton did not converge in {params.max_newton} iterations "
            f"(last increment {report.increment_norms[-1]:.3e}, residual {report.residual_norms[-1]:.3e})"
        )
    return state, report
