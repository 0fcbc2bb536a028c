import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nsbf.adapt import AdaptConfig, mark, run_amr
from nsbf.bench import run_uniform
from nsbf.spaces import ModelParams


def test_mark_examples():
    eta = [0.1, 0.5, 0.3, 0.5, 0.0]
    r, c = mark(eta, AdaptConfig(theta_r=0.3, theta_c=0.2))
    assert r == {1, 3}  # ceil(1.5) = 2, ties by lower id
    assert c == {4}  # floor(1.0) = 1
    r, c = mark([1.0, 1.0, 1.0], AdaptConfig(theta_r=0.2))
    assert r == {0} and c == set()


def test_mark_rejects_empty():
    with pytest.raises(ValueError):
        mark([], AdaptConfig())


@given(
    eta=st.lists(st.floats(0, 10), min_size=1, max_size=60),
    tr=st.floats(0.01, 0.6),
    tc=st.floats(0.0, 0.39),
)
def test_mark_sizes_and_disjointness(eta, tr, tc):
    cfg = AdaptConfig(theta_r=tr, theta_c=tc)
    r, c = mark(eta, cfg)
    N = len(eta)
    assert len(r) == min(N, math.ceil(tr * N))
    assert len(c) == min(N - len(r), math.floor(tc * N))
    assert not r & c
    if r and c:
        assert min(eta[i] for i in r) >= max(eta[i] for i in c)


@pytest.mark.parametrize(
    "kw", [dict(theta_r=0.0), dict(theta_r=1.0), dict(theta_c=-0.1), dict(theta_r=0.7, theta_c=0.5), dict(l_max=-1)]
)
def test_config_validation(kw):
    with pytest.raises(ValueError):
        AdaptConfig(**kw)


def test_lmax_zero_gives_one_record():
    recs = run_amr("lshape", AdaptConfig(l_max=0), ModelParams())
    assert len(recs) == 1 and recs[0].dofs == 23


def test_refining_everything_equals_uniform():
    p = ModelParams()
    mark_all = lambda eta, mesh: (set(range(mesh.n_cells)), set())
    a = run_amr("smooth2d", AdaptConfig(l_max=2), p, marker=mark_all, rate_mode="h")
    b = run_uniform("smooth2d", p, 3)
    assert a == b


def test_lshape_adaptive_concentrates_at_the_corner():
    ratios, dofs = [], []

    def near_corner(level, mesh, state, eta):
        ratios.append(np.mean(np.linalg.norm(mesh.centroid, axis=1) < 0.25))
        dofs.append(state.layout.size)

    run_amr("lshape", AdaptConfig(l_max=5), ModelParams(), callback=near_corner)
    assert dofs[:3] == [23, 79, 169]
    assert all(b > a for a, b in zip(ratios[:5], ratios[1:6]))
