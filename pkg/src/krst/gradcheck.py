"""Central-difference gradient checking against the autodiff engine."""
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError
from .tensor import record_branches


@dataclass
class GradCheckReport:
    max_rel_error: float
    n_checked: int
    n_rejected: int
    worst_param: str = ""
    worst_index: int = -1

    def passed(self, tol):
        return bool(self.n_checked > 0 and self.max_rel_error < tol)


def _same_branches(a, b):
    if len(a) != len(b):
        return False
    return all(ta == tb and np.array_equal(xa, xb) for (ta, xa), (tb, xb) in zip(a, b))


def _scalar(loss):
    value = float(np.asarray(loss.data).reshape(-1)[0]) if loss.data.size == 1 else None
    if value is None:
        raise ConfigError(f"loss must be scalar, got shape {loss.shape}")
    if not np.isfinite(value):
        raise NumericError(f"non-finite loss {value}")
    return value


def finite_diff_check(loss_fn, store, eps=1e-6, n_coords=200, rng=None, floor=1e-3, names=None):
    """Worst relative error between autodiff and central differences.

    ``loss_fn()`` must rebuild the graph from ``store`` on every call and
    return a scalar tensor. When the store holds more than ``n_coords``
    scalars a random subset is checked. A coordinate whose +/-eps
    perturbation flips any ReLU mask, max route or neighbor choice sits
    next to a kink; it is rejected and another one is drawn. Relative
    error is ``|fd - ad| / max(|fd|, |ad|, floor)``.
    """
    if not eps > 0:
        raise ConfigError(f"finite-difference step must be positive, got {eps}")
    rng = np.random.default_rng(0) if rng is None else rng
    names = store.names() if names is None else list(names)

    store.zero_grad()
    with record_branches() as base_trace:
        loss = loss_fn()
    _scalar(loss)
    loss.backward()
    analytic = {n: (np.zeros_like(store[n].data) if store[n].grad is None else store[n].grad.copy()) for n in names}
    store.zero_grad()

    coords = [(n, i) for n in names for i in range(store[n].data.size)]
    order = rng.permutation(len(coords)) if len(coords) > n_coords else np.arange(len(coords))

    worst, worst_name, worst_idx = 0.0, "", -1
    checked = rejected = 0
    for c in order:
        if checked >= n_coords:
            break
        name, i = coords[c]
        flat = store[name].data.reshape(-1)
        orig = flat[i]
        values = []
        tie = False
        for delta in (eps, -eps):
            flat[i] = orig + delta
            with record_branches() as trace:
                out = loss_fn()
            values.append(_scalar(out))
            if not _same_branches(base_trace, trace):
                tie = True
        flat[i] = orig
        if tie:
            rejected += 1
            continue
        fd = (values[0] - values[1]) / (2.0 * eps)
        ad = analytic[name].reshape(-1)[i]
        rel = abs(fd - ad) / max(abs(fd), abs(ad), floor)
        checked += 1
        if rel > worst:
            worst, worst_name, worst_idx = rel, name, int(i)
    return GradCheckReport(worst, checked, rejected, worst_name, worst_idx)
