import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from implicit_sdf import _kernels_py, kernels

compiled = pytest.importorskip("implicit_sdf._kernels")


def test_backend_is_selected():
    assert kernels.BACKEND in ("cython", "python")


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 300), st.integers(2, 300), st.sampled_from([2, 3]), st.integers(0, 2**31 - 1))
def test_min_sq_dist_parity(na, nb, d, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((na, d)), rng.standard_normal((nb, d))
    assert np.array_equal(compiled.min_sq_dist(a, b), _kernels_py.min_sq_dist(a, b))


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 200), st.sampled_from([2, 3]), st.integers(0, 2**31 - 1), st.data())
def test_kth_sq_dist_parity(n, d, seed, data):
    k = data.draw(st.integers(1, n - 1))
    pts = np.random.default_rng(seed).standard_normal((n, d))
    assert np.array_equal(compiled.kth_sq_dist(pts, k), _kernels_py.kth_sq_dist(pts, k))


@pytest.mark.parametrize("record", [False, True])
def test_linear_gd_parity(record):
    rng = np.random.default_rng(0)
    ev = np.array([0.0, 0.5, 1.0])
    for _ in range(5):
        q0 = rng.standard_normal(3)
        a = compiled.linear_gd(ev, 0.1, q0, 0.01, 20_000, 1e-8, record)
        b = _kernels_py.linear_gd(ev, 0.1, q0, 0.01, 20_000, 1e-8, record)
        assert a[1:3] == b[1:3]
        for x, y in zip((a[0], a[3], a[4]), (b[0], b[3], b[4])):
            assert np.array_equal(np.asarray(x), np.asarray(y))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([1.0, 10.0, 100.0]))
def test_softplus_pair_parity(seed, beta):
    rng = np.random.default_rng(seed)
    s = rng.standard_normal((17, 9)) * rng.choice([1e-6, 1e-3, 0.1, 10.0])
    s[0, :3] = [0.0, -0.0, 1e-300]
    act_c, slope_c = compiled.softplus_pair(s, beta)
    act_p, slope_p = _kernels_py.softplus_pair(s, beta)
    assert np.array_equal(act_c, act_p) and np.array_equal(slope_c, slope_p)
