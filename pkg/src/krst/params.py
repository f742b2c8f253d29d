"""Named parameter storage and initialization."""
import numpy as np

from .errors import ConfigError
from .tensor import Tensor


class ParamStore:
    """Mapping from dotted path to trainable tensor, iterated in sorted order."""

    def __init__(self):
        self._params = {}

    def __len__(self):
        return len(self._params)

    def __contains__(self, name):
        return name in self._params

    def __getitem__(self, name):
        try:
            return self._params[name]
        except KeyError:
            raise ConfigError(f"missing parameter {name!r}") from None

    def __iter__(self):
        return iter(self.names())

    def names(self):
        return sorted(self._params)

    def items(self):
        return [(n, self._params[n]) for n in self.names()]

    def add(self, name, data):
        if name in self._params:
            raise ConfigError(f"duplicate parameter name {name!r}")
        t = Tensor(data, requires_grad=True, name=name)
        self._params[name] = t
        return t

    def uniform(self, name, shape, fan_in, rng, gain=1.0):
        """Uniform in +/- gain / sqrt(fan_in)."""
        bound = gain / np.sqrt(fan_in)
        return self.add(name, rng.uniform(-bound, bound, size=shape))

    def zeros(self, name, shape):
        return self.add(name, np.zeros(shape))

    def zero_grad(self):
        for t in self._params.values():
            t.grad = None

    def count(self, prefix=""):
        return sum(t.data.size for n, t in self._params.items() if n.startswith(prefix))

    def snapshot(self):
        return {n: t.data.copy() for n, t in self.items()}

    def load_arrays(self, arrays):
        """Overwrite values in place; names and shapes must match exactly."""
        if set(arrays) != set(self._params):
            missing = sorted(set(self._params) - set(arrays))
            extra = sorted(set(arrays) - set(self._params))
            raise ConfigError(f"parameter sets differ: missing={missing} unexpected={extra}")
        for name, arr in arrays.items():
            t = self._params[name]
            if tuple(arr.shape) != t.shape:
                raise ConfigError(f"shape mismatch for {name!r}: {tuple(arr.shape)} vs {t.shape}")
            t.data = np.array(arr, dtype=np.float64, copy=True)
