"""Solve, estimate, mark and adapt loop driven by fixed marking fractions."""
from dataclasses import dataclass
import math

import numpy as np

from .bench import coarse_mesh, fill_rates, make_case, solve_level
from .mesh import adapt, uniform_refine

__all__ = ["AdaptConfig", "mark", "run_amr"]


@dataclass(frozen=True)
class AdaptConfig:
    """Marking fractions and loop length.

    ``l_max`` counts adaptation steps after the first solve, so a run yields
    ``l_max + 1`` records.
    """

    theta_r: float = 0.275
    theta_c: float = 0.0
    l_max: int = 9
    initial_uniform: int = 0

    def __post_init__(self):
        if not 0.0 < self.theta_r < 1.0:
            raise ValueError("theta_r must lie in (0, 1)")
        if not 0.0 <= self.theta_c < 1.0:
            raise ValueError("theta_c must lie in [0, 1)")
        if self.theta_r + self.theta_c > 1.0:
            raise ValueError("theta_r + theta_c must not exceed 1")
        if self.l_max < 0 or self.initial_uniform < 0:
            raise ValueError("l_max and initial_uniform must be non-negative")


def mark(eta, config):
    """Refinement and coarsening sets by fixed fractions.

    The ``ceil(theta_r N)`` largest indicators are refined and the
    ``floor(theta_c N)`` smallest ones (outside the refine set) coarsened;
    ties go to the lower cell id.
    """
    eta = np.asarray(eta, dtype=float)
    N = len(eta)
    if N == 0:
        raise ValueError("empty indicator list")
    ids = np.arange(N)
    n_r = min(N, math.ceil(config.theta_r * N))
    n_c = math.floor(config.theta_c * N)
    # lexsort: last key is primary
    by_desc = np.lexsort((ids, -eta))
    refine = by_desc[:n_r]
    taken = np.zeros(N, dtype=bool)
    taken[refine] = True
    by_asc = np.lexsort((ids, eta))
    coarsen = [c for c in by_asc if not taken[c]][:n_c]
    return set(int(c) for c in refine), set(int(c) for c in coarsen)


def run_amr(case, config, params, marker=None, callback=None, rate_mode="dofs"):
    """Adaptive loop: solve, then ``l_max`` times estimate, mark, adapt, solve.

    Parameters
    ----------
    case : str, case class or case instance
    config : AdaptConfig
    params : ModelParams
    marker : callable, optional
        ``marker(eta, mesh) -> (refine_set, coarsen_set)`` replacing
        :func:`mark`.
    callback : callable, optional
        Called as ``callback(level, mesh, state, eta)`` after every solve.
    rate_mode : {"dofs", "h"}

    Returns
    -------
    list of RunRecord
    """
    case = make_case(case, params)
    mesh = coarse_mesh(case)
    if config.initial_uniform:
        mesh = uniform_refine(mesh, config.initial_uniform)
    records = []
    for level in range(config.l_max + 1):
        if level:
            if marker is None:
                r, c = mark(eta, config)
            else:
                r, c = marker(eta, mesh)
            mesh = adapt(mesh, r, c)
        rec, state, eta = solve_level(case, params, mesh, level)
        records.append(rec)
        if callback is not None:
            callback(level, mesh, state, eta)
    return fill_rates(records, rate_mode)
