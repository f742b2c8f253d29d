"""The numba kernels must agree bit for bit with the numpy fallback."""
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from krst import _accel, kernels


def brute_knn(x, k, include_self=True):
    g, n, _ = x.shape
    idx = np.empty((g, n, k), dtype=np.int64)
    for b in range(g):
        for i in range(n):
            d = [(float(np.sum((x[b, i] - x[b, j]) ** 2)), j) for j in range(n) if include_self or j != i]
            d.sort()
            idx[b, i] = [j for _, j in d[:k]]
    return idx


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 3), st.integers(1, 12), st.integers(1, 5), st.data(), st.booleans())
def test_knn_paths_identical(g, n, c, data, include_self):
    avail = n if include_self else n - 1
    if avail < 1:
        return
    k = data.draw(st.integers(1, avail))
    seed = data.draw(st.integers(0, 2**31))
    rng = np.random.default_rng(seed)
    # a coarse grid produces plenty of exact distance ties
    x = rng.integers(-2, 3, size=(g, n, c)).astype(float) * 0.5
    a_idx, a_d = kernels.knn_numpy(x, k, include_self)
    b_idx, b_d = kernels.knn_numba(x, k, include_self)
    assert np.array_equal(a_idx, b_idx) and np.array_equal(a_d, b_d)
    assert np.array_equal(a_idx, brute_knn(x, k, include_self))


def test_knn_continuous_values(rng):
    x = rng.normal(size=(4, 30, 64))
    a, b = kernels.knn_numpy(x, 7), kernels.knn_numba(x, 7)
    assert np.array_equal(a[0], b[0]) and a[1].tobytes() == b[1].tobytes()


def test_scatter_paths_identical(rng):
    idx = rng.integers(0, 10, size=200)
    src = rng.normal(size=(200, 3, 2))
    a = kernels.scatter_add_rows_numpy(np.zeros((10, 3, 2)), idx, src)
    b = kernels.scatter_add_rows_numba(np.zeros((10, 3, 2)), idx, src)
    assert a.tobytes() == b.tobytes()


def test_scatter_repeated_index_accumulates():
    out = kernels.scatter_add_rows(np.zeros((2, 1)), np.array([1, 1, 0]), np.array([[1.0], [2.0], [5.0]]))
    assert out.ravel().tolist() == [5.0, 3.0]


def test_default_selection_follows_flag():
    assert _accel.HAVE_NUMBA
    expect = kernels.knn_numba if _accel.USE_NUMBA else kernels.knn_numpy
    assert kernels.knn is expect


@pytest.mark.parametrize("flag,expect", [("0", "knn_numpy"), ("off", "knn_numpy"), ("1", "knn_numba")])
def test_env_flag(flag, expect):
    code = "from krst import kernels; print(kernels.knn.__name__)"
    env = dict(os.environ, KRST_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == expect
