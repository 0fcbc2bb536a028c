import numpy as np
import pytest
from hypothesis import given, strategies as st

from nsbf.bench import run_uniform
from nsbf.estimator import effectivity, estimate, eta_global, eta_local, exact_errors
from nsbf.spaces import ModelParams, SolutionState, build_layout, cr_interpolate


def test_constant_forcing_on_zero_state(hanging_mesh):
    c = np.array([0.5, -2.0])
    st0 = SolutionState.zeros(build_layout(hanging_mesh))
    eta = eta_local(st0, ModelParams(), lambda x: np.broadcast_to(c, x.shape))
    np.testing.assert_allclose(eta**2, hanging_mesh.area**2 * (c @ c), rtol=1e-13)


class AffineFlow:
    """Globally affine velocity with constant vorticity and zero pressure."""

    def __init__(self, params, c, A):
        self.params, self.c, self.A = params, np.asarray(c), np.asarray(A)

    def velocity(self, x):
        return self.c + np.asarray(x) @ self.A.T

    def rot_velocity(self, x):
        return np.full(len(x), self.A[1, 0] - self.A[0, 1])

    def vorticity(self, x):
        return np.sqrt(self.params.nu) * self.rot_velocity(x)

    def pressure(self, x):
        return np.zeros(len(x))

    def pressure_mean(self):
        return 0.0

    def forcing(self, x):
        # the strong residual of the estimator vanishes for this right-hand side
        prm = self.params
        u = self.velocity(x)
        w = self.vorticity(x)[:, None]
        u_cross_w = w * np.stack([u[:, 1], -u[:, 0]], axis=1)
        return u / prm.kappa - u_cross_w / np.sqrt(prm.nu) + prm.forchheimer * np.linalg.norm(u, axis=1)[:, None] * u


def interpolated_state(mesh, flow):
    lay = build_layout(mesh, flow.velocity)
    u = cr_interpolate(lay, flow.velocity)
    w = flow.vorticity(mesh.centroid)
    return SolutionState(lay, u, w, np.zeros(mesh.n_cells))


@given(seed=st.integers(0, 2**31), nu=st.sampled_from([1.0, 1e-2]))
def test_affine_flow_has_zero_indicators_and_errors(seed, nu, hanging_mesh):
    r = np.random.default_rng(seed)
    A = r.normal(size=(2, 2))
    A[1, 1] = -A[0, 0]  # exact velocities are solenoidal
    flow = AffineFlow(ModelParams(nu=nu, kappa=0.7, forchheimer=1.3), r.normal(size=2), A)
    state = interpolated_state(hanging_mesh, flow)
    eta = eta_local(state, flow.params, flow.forcing)
    assert np.abs(eta).max() <= 1e-11
    assert max(exact_errors(state, flow.params, flow)) <= 1e-12


def test_effectivity_without_error_is_zero(hanging_mesh):
    flow = AffineFlow(ModelParams(), [1.0, 2.0], [[0.0, 1.0], [-1.0, 0.0]])
    state = interpolated_state(hanging_mesh, flow)
    assert effectivity(state, flow, flow.params, forcing=lambda x: flow.forcing(x) + 1.0) == pytest.approx(0.0, abs=1e-12)


def test_global_is_root_sum_of_squares(rng):
    eta = rng.uniform(size=20)
    assert eta_global(eta) == pytest.approx(np.sqrt((eta**2).sum()), rel=1e-15)


def test_smooth_case_estimator_halves():
    p = ModelParams()
    recs = run_uniform("smooth2d", p, 4)
    ratios = [b.eta_global / a.eta_global for a, b in zip(recs, recs[1:])]
    assert all(0.4 <= q <= 0.6 for q in ratios[1:])
    assert all(r.effectivity > 0 for r in recs)


def test_estimate_report_consistent():
    p = ModelParams()
    recs = []
    run_uniform("smooth2d", p, 2, callback=lambda k, m, s, e: recs.append((s, e)))
    from nsbf.cases import SmoothCase

    state, eta = recs[-1]
    rep = estimate(state, p, SmoothCase(p))
    np.testing.assert_allclose(rep.eta_local, eta)
    assert rep.effectivity == pytest.approx((rep.error_u_h + rep.error_w + rep.error_p) / rep.eta_global)
