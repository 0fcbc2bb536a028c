"""End-to-end acceptance checks.

Each test prints one ``criterion N: PASS|FAIL`` line (also collected in the
terminal summary) and then asserts the criterion at its stated tolerance.
Expensive benchmark runs are cached and shared between criteria.
"""
from functools import lru_cache
import time

import numpy as np
import pytest

from nsbf.adapt import AdaptConfig, run_amr
from nsbf.bench import coarse_mesh, make_case, run_uniform
from nsbf.forms import Discretization
from nsbf.invest import (
    AffineField,
    BubbleContext,
    classical_bubble_constant,
    estimate_C_eq,
    quotient_Q,
    sample_slice,
)
from nsbf.mesh import adapt, build_coarse_mesh, uniform_refine
from nsbf.quadrature import gauss_segment
from nsbf.spaces import ModelParams, build_layout, cr_interpolate, rt_evaluate, rt_interpolate

from helpers import divergence_free_field, fd_jacobian_error, gradient_pairing, p1_continuous

pytestmark = pytest.mark.acceptance

SMOOTH_DOFS = [33, 145, 609, 2497, 10113, 40705, 163329]
LSHAPE_DOFS = [23, 105, 449, 1857, 7553, 30465, 122369]

# every benchmark configuration: (case, nu, scheme, theta)
CONFIGS = {
    "smooth_nu1": ("smooth2d", 1.0, "modified", 10.0),
    "smooth_nu1e-4_standard": ("smooth2d", 1e-4, "standard", 10.0),
    "smooth_nu1e-4_modified": ("smooth2d", 1e-4, "modified", 10.0),
    "smooth_theta0": ("smooth2d", 1e-4, "modified", 0.0),
    "smooth_theta1": ("smooth2d", 1e-4, "modified", 1.0),
    "lshape": ("lshape", 1.0, "modified", 10.0),
}


def params_of(name):
    _, nu, scheme, theta = CONFIGS[name]
    return ModelParams(nu=nu, scheme=scheme, theta_stab=theta)


@lru_cache(maxsize=None)
def uniform(name, levels):
    t0 = time.perf_counter()
    recs = run_uniform(CONFIGS[name][0], params_of(name), levels)
    return recs, time.perf_counter() - t0


@lru_cache(maxsize=None)
def adaptive(steps=10):
    return run_amr("lshape", AdaptConfig(theta_r=0.275, theta_c=0.0, l_max=steps - 1), params_of("lshape"))


def all_benchmark_records():
    runs = {
        "smooth_nu1": uniform("smooth_nu1", 7)[0],
        "smooth_nu1e-4_standard": uniform("smooth_nu1e-4_standard", 7)[0],
        "smooth_nu1e-4_modified": uniform("smooth_nu1e-4_modified", 7)[0],
        "smooth_theta0": uniform("smooth_theta0", 5)[0],
        "smooth_theta1": uniform("smooth_theta1", 5)[0],
        "lshape_uniform": uniform("lshape", 7)[0],
        "lshape_adaptive": adaptive(),
    }
    return runs


def within(values, lo, hi):
    return all(lo <= v <= hi for v in values)


def fmt(values):
    return "[" + ", ".join(f"{v:.3g}" for v in values) + "]"


def report(lines, n, checks):
    """Record and print the verdict; ``checks`` maps a label to (ok, detail)."""
    ok = all(c for c, _ in checks.values())
    detail = "; ".join(f"{k}: {'ok' if c else 'FAILED'} {d}" for k, (c, d) in checks.items())
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} | {detail}"
    lines[n] = line
    print(line)
    return ok, line


def test_criterion_1_smooth_convergence(acceptance_lines):
    recs, seconds = uniform("smooth_nu1", 7)
    last = recs[-3:]
    rates = {k: [getattr(r, "rate_" + k) for r in last] for k in "uwp"}
    checks = {
        "dofs": ([r.dofs for r in recs] == SMOOTH_DOFS, str([r.dofs for r in recs])),
        **{f"rate_{k}": (within(v, 0.9, 1.1), fmt(v)) for k, v in rates.items()},
        "runtime": (seconds <= 600.0, f"{seconds:.0f}s"),
    }
    ok, line = report(acceptance_lines, 1, checks)
    assert ok, line


def test_criterion_2_pressure_robustness(acceptance_lines):
    std = uniform("smooth_nu1e-4_standard", 7)[0]
    mod = uniform("smooth_nu1e-4_modified", 7)[0]
    ratios = [m.err_u / s.err_u for s, m in zip(std[2:7], mod[2:7])]
    ok, line = report(acceptance_lines, 2, {"modified/standard err_u levels 3-7": (max(ratios) <= 0.1, fmt(ratios))})
    assert ok, line


def test_criterion_3_stabilisation(acceptance_lines):
    zero = uniform("smooth_theta0", 5)[0]
    one = uniform("smooth_theta1", 5)[0]
    rates = [r.rate_u for r in one[-2:]]
    checks = {
        "theta=0 err_u level5 > level1": (zero[4].err_u > zero[0].err_u, fmt([zero[0].err_u, zero[4].err_u])),
        "theta=1 rate_u last two": (within(rates, 0.9, 1.6), fmt(rates)),
    }
    ok, line = report(acceptance_lines, 3, checks)
    assert ok, line


def test_criterion_4_kernel_identities(acceptance_lines):
    worst = {}
    for name, recs in all_benchmark_records().items():
        worst[name] = max(max(r.loss_div, r.loss_curl) for r in recs)
    bad = {k: v for k, v in worst.items() if v > 1e-10}
    ok, line = report(acceptance_lines, 4, {"max loss": (not bad, f"{max(worst.values()):.2e}" + (f" {bad}" if bad else ""))})
    assert ok, line


def test_criterion_5_lshape_uniform(acceptance_lines):
    recs = uniform("lshape", 7)[0]
    eff = [r.effectivity for r in recs]
    checks = {
        "dofs": ([r.dofs for r in recs] == LSHAPE_DOFS, str([r.dofs for r in recs])),
        "asymptotic rate_u": (0.50 <= recs[-1].rate_u <= 0.58, f"{recs[-1].rate_u:.4f}"),
        "effectivity": (within(eff, 1.4, 2.1), fmt(eff)),
    }
    ok, line = report(acceptance_lines, 5, checks)
    assert ok, line


def test_criterion_6_lshape_adaptive(acceptance_lines):
    recs = adaptive()
    uni = uniform("lshape", 7)[0]
    rates = [r.rate_u for r in recs[-3:]]
    eff = [r.effectivity for r in recs]
    final, ref = recs[-1], uni[-1]
    checks = {
        "rate_u last three": (within(rates, 0.9, 1.1), fmt(rates)),
        "effectivity": (within(eff, 1.4, 2.1), fmt(eff)),
        "beats uniform": (
            final.dofs <= 30000 and ref.dofs >= 120000 and final.err_u < ref.err_u,
            f"{final.err_u:.3e}@{final.dofs} vs {ref.err_u:.3e}@{ref.dofs}",
        ),
    }
    ok, line = report(acceptance_lines, 6, checks)
    assert ok, line


def test_criterion_7_newton(acceptance_lines):
    iters = {name: max(r.newton_iters for r in recs) for name, recs in all_benchmark_records().items()}
    rng = np.random.default_rng(2024)
    fd = {}
    for name in CONFIGS:
        prm = params_of(name)
        case = make_case(CONFIGS[name][0], prm)
        lay = build_layout(uniform_refine(coarse_mesh(case)), case.dirichlet)
        disc = Discretization(lay, prm, case.forcing)
        fd[name] = max(fd_jacobian_error(disc, rng.normal(size=lay.size), rng.normal(size=lay.size))
                       for _ in range(3))
    checks = {
        "newton iterations <= 6": (max(iters.values()) <= 6, str(iters)),
        "FD Jacobian <= 1e-6": (max(fd.values()) <= 1e-6, f"{max(fd.values()):.1e}"),
    }
    ok, line = report(acceptance_lines, 7, checks)
    assert ok, line


def random_mesh(rng):
    m = build_coarse_mesh(rng.choice(["unit_square", "l_shape"]))
    for _ in range(rng.integers(0, 3)):
        ids = rng.permutation(m.n_cells)[: rng.integers(1, m.n_cells + 1)]
        m = adapt(m, ids)
    return m


def facet_flux_divergence(mesh, c, a):
    """``int_K div(c + a x)`` through Gauss quadrature of normal traces on the cell boundary."""
    t, w = gauss_segment(2)
    total = np.zeros(mesh.n_cells)
    P = mesh.cell_verts
    for i in range(3):
        p, q = P[:, (i + 1) % 3], P[:, (i + 2) % 3]
        for tk, wk in zip(t, w):
            x = p + tk * (q - p)
            v = rt_evaluate(c, a, np.arange(mesh.n_cells), x)
            total += wk * mesh.cell_facet_len[:, i] * np.einsum("nd,nd->n", v, mesh.cell_normals[:, i])
    return total


def test_criterion_8_interpolation_identities(acceptance_lines):
    rng = np.random.default_rng(8)
    err_rep = err_b = err_orth = 0.0
    for _ in range(100):
        m = random_mesh(rng)
        # reproduction of RT0 (and constant) fields
        c0, a0 = rng.normal(size=2), rng.normal() * rng.integers(0, 2)
        f = lambda x: c0 + a0 * x
        lay = build_layout(m, f)
        c, a = rt_interpolate(m, lay.local(cr_interpolate(lay, f)))
        err_rep = max(err_rep, np.abs(c - c0).max(), np.abs(a - a0).max())
        # b_h(v_h; q_h) = b(Pi_RT v_h; q_h)
        lay0 = build_layout(m)
        U = lay0.local(rng.normal(size=lay0.n_u))
        q = rng.normal(size=m.n_cells)
        gphi = m.cell_facet_len[..., None] * m.cell_normals
        bh = -q @ np.einsum("nid,nid->n", U, gphi)
        c, a = rt_interpolate(m, U)
        b = -q @ facet_flux_divergence(m, c, a)
        err_b = max(err_b, abs(bh - b) / max(1.0, abs(bh)))
    for _ in range(100):
        m = uniform_refine(build_coarse_mesh(rng.choice(["unit_square", "l_shape"])), int(rng.integers(0, 2)))
        lay = build_layout(m)
        v = divergence_free_field(lay, rng)
        v /= np.abs(v).max()
        err_orth = max(err_orth, abs(gradient_pairing(m, lay.local(v), p1_continuous(m, rng))))
    checks = {
        "RT0 reproduction": (err_rep <= 1e-12, f"{err_rep:.1e}"),
        "b_h identity": (err_b <= 1e-12, f"{err_b:.1e}"),
        "gradient orthogonality": (err_orth <= 1e-12, f"{err_orth:.1e}"),
    }
    ok, line = report(acceptance_lines, 8, checks)
    assert ok, line


def test_criterion_9_inverse_estimate_lab(acceptance_lines):
    t0 = time.perf_counter()
    ctx = BubbleContext()
    rng = np.random.default_rng(9)
    n = 10_000
    a, B = sample_slice(n, rng)
    t = rng.choice([-1.0, 1.0], n) * 10.0 ** rng.uniform(-3, 3, n)
    min_q, dev = np.inf, 0.0
    for i in range(n):
        q = quotient_Q(AffineField(a[i], B[i]), ctx)
        qt = quotient_Q(AffineField(t[i] * a[i], t[i] * B[i]), ctx)
        min_q, dev = min(min_q, q), max(dev, abs(q - qt))
    m1 = estimate_C_eq(2000, 0, ctx)["maxQ"]
    m2 = estimate_C_eq(2000, 1, ctx)["maxQ"]
    c = [classical_bubble_constant(k, ctx) for k in (0, 1, 2)]
    seconds = time.perf_counter() - t0
    checks = {
        "Q >= 1": (min_q >= 1.0 - 1e-12, f"min {min_q:.6f}"),
        "Q(f) = Q(tf)": (dev <= 1e-10, f"max dev {dev:.1e}"),
        "max Q across seeds": (np.isfinite(m1) and abs(m1 - m2) <= 0.01 * max(m1, m2), fmt([m1, m2])),
        "classical monotone": (c[0] < c[1] < c[2], fmt(c)),
        "runtime": (seconds <= 120.0, f"{seconds:.0f}s"),
    }
    ok, line = report(acceptance_lines, 9, checks)
    assert ok, line
