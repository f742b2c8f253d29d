import numpy as np
import pytest

from krst import tensor as T
from krst.config import build_config
from krst.data import load_split
from krst.harness import generate


def numeric_grad(fn, x, eps=1e-6):
    """Central differences of scalar ``fn()`` with respect to array ``x``, in place."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + eps
        up = fn()
        x[i] = old - eps
        down = fn()
        x[i] = old
        g[i] = (up - down) / (2 * eps)
    return g


def rel_err(a, b, floor=1e-8):
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def check_op_grad(op, *arrays, tol=1e-5, weights_seed=0):
    """Compare autodiff and finite differences of ``sum(w * op(*inputs))``."""
    leaves = [T.Tensor(a.copy(), requires_grad=True) for a in arrays]
    out = op(*leaves)
    w = np.random.default_rng(weights_seed).normal(size=out.shape)
    T.total(T.mul(out, w)).backward()
    for leaf, arr in zip(leaves, arrays):
        work = arr.copy()

        def f(work=work, leaf_pos=leaves.index(leaf)):
            args = [T.Tensor(work if j == leaf_pos else a) for j, a in enumerate(arrays)]
            return float(np.sum(op(*args).data * w))

        num = numeric_grad(f, work)
        assert rel_err(leaf.grad, num) < tol


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_data(tmp_path_factory):
    """Small frame_relpos dataset shared by the harness tests."""
    root = tmp_path_factory.mktemp("tiny")
    cfg = build_config(overrides={"task": "frame_relpos", "data": str(root / "data"), "out": str(root / "run"),
                                  "n_train": 24, "n_val": 8, "n_test": 12, "C": 16, "C_s": 16, "C_o": 16,
                                  "C_w": 16, "epochs": 2, "batch_size": 8})
    generate(cfg)
    return cfg


@pytest.fixture(scope="session")
def tiny_splits(tiny_data):
    return {s: load_split(tiny_data.data, s) for s in ("train", "val", "test")}


ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Collects one verdict line per criterion for the terminal summary."""
    def report(number, title, ok, detail=""):
        ACCEPTANCE_LINES.append((number, f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}  {detail}".rstrip()))
        return ok
    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
