"""Layers built from tensor ops: affine maps, the two-layer MLP, BiLSTM
and dropout."""
import numpy as np

from . import tensor as T
from .errors import ConfigError, DimensionError


RELU_GAIN = np.sqrt(6.0)
LINEAR_GAIN = np.sqrt(3.0)


def init_linear(store, prefix, n_in, n_out, rng, bias=True, gain=LINEAR_GAIN):
    """Weight bound gain/sqrt(n_in); bias bound 1/sqrt(n_in)."""
    store.uniform(f"{prefix}.W", (n_in, n_out), n_in, rng, gain)
    if bias:
        store.uniform(f"{prefix}.b", (n_out,), n_in, rng)


def linear(x, W, b=None):
    """``x @ W + b`` with W stored (in, out)."""
    out = T.matmul(x, W)
    return out if b is None else T.add(out, b)


def init_mlp2(store, prefix, n_in, n_hidden, n_out, rng):
    init_linear(store, f"{prefix}.l1", n_in, n_hidden, rng, gain=RELU_GAIN)
    init_linear(store, f"{prefix}.l2", n_hidden, n_out, rng)


def mlp2(x, W1, b1, W2, b2):
    """Affine, ReLU, affine."""
    x = T.as_tensor(x)
    if x.shape[-1] != W1.shape[0] or W1.shape[1] != W2.shape[0]:
        raise DimensionError(f"mlp2: input {x.shape} incompatible with W1 {W1.shape} and W2 {W2.shape}")
    return linear(T.relu(linear(x, W1, b1)), W2, b2)


def apply_mlp2(store, prefix, x):
    return mlp2(x, store[f"{prefix}.l1.W"], store[f"{prefix}.l1.b"], store[f"{prefix}.l2.W"], store[f"{prefix}.l2.b"])


def dropout(x, p, training, rng):
    """Inverted dropout: zero with probability p, scale survivors by 1/(1-p)."""
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout probability must be in [0, 1), got {p}")
    x = T.as_tensor(x)
    if not training or p == 0.0:
        return x
    keep = rng.random(x.shape) >= p
    return T.mul(x, keep / (1.0 - p))


# gate order in the packed weight matrices: input, forget, cell, output
def init_lstm(store, prefix, n_in, n_hidden, rng):
    store.uniform(f"{prefix}.W_ih", (n_in, 4 * n_hidden), n_in, rng)
    store.uniform(f"{prefix}.W_hh", (n_hidden, 4 * n_hidden), n_hidden, rng)
    b = store.uniform(f"{prefix}.b", (4 * n_hidden,), n_hidden, rng)
    b.data[n_hidden : 2 * n_hidden] = 1.0


def lstm_scan(xw, W_hh, reverse=False):
    """Run one LSTM direction over precomputed input projections.

    ``xw`` is (B, L, 4h): inputs already multiplied by W_ih with the bias
    added. Gate order is input, forget, cell, output. Returns the hidden
    states (B, L, h) ordered by position. The whole scan is one graph node
    whose backward pass is hand-written backpropagation through time.
    """
    xw, W_hh = T.as_tensor(xw), T.as_tensor(W_hh)
    B, L, four_h = xw.shape
    n = four_h // 4
    steps = list(range(L - 1, -1, -1) if reverse else range(L))
    H = np.empty((B, L, n))
    h = np.zeros((B, n))
    c = np.zeros((B, n))
    saved = []
    for t in steps:
        z = xw.data[:, t, :] + h @ W_hh.data
        i = T._stable_sigmoid(z[:, :n])
        f = T._stable_sigmoid(z[:, n : 2 * n])
        g = np.tanh(z[:, 2 * n : 3 * n])
        o = T._stable_sigmoid(z[:, 3 * n :])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        saved.append((h, c, i, f, g, o, tc))
        h, c = o * tc, c_new
        H[:, t, :] = h

    def backward(G):
        d_xw = np.zeros(xw.shape)
        d_W = np.zeros(W_hh.shape)
        dh_next = np.zeros((B, n))
        dc_next = np.zeros((B, n))
        for t, (h_prev, c_prev, i, f, g, o, tc) in zip(reversed(steps), reversed(saved)):
            dh = G[:, t, :] + dh_next
            dc = dc_next + dh * o * (1.0 - tc * tc)
            dz = np.concatenate(
                [dc * g * i * (1.0 - i), dc * c_prev * f * (1.0 - f), dc * i * (1.0 - g * g), dh * tc * o * (1.0 - o)],
                axis=1,
            )
            d_xw[:, t, :] = dz
            d_W += h_prev.T @ dz
            dh_next = dz @ W_hh.data.T
            dc_next = dc * f
        if xw.requires_grad:
            xw._accumulate(d_xw)
        if W_hh.requires_grad:
            W_hh._accumulate(d_W)

    return T._result(H, (xw, W_hh), backward)


def bilstm_encode(E, store, prefix, lookup=None):
    """Contextualized word features and a sentence vector.

    ``E`` is (B, L, e). Returns ``(Q_w, Q_s)`` with shapes (B, L, 2h) and
    (B, 1, 2h); Q_s joins the forward pass's state after the last word and
    the backward pass's state after the first word. Passing
    ``lookup=(table, tokens)`` with ``E == table[tokens]`` projects each
    distinct token once instead of once per position.
    """
    E = T.as_tensor(E)
    if E.ndim != 3:
        raise DimensionError(f"bilstm_encode expects (B, L, e), got {E.shape}")
    if E.shape[1] == 0:
        raise DimensionError("bilstm_encode: empty sequence")
    outs = []
    for direction, reverse in (("fwd", False), ("bwd", True)):
        p = f"{prefix}.{direction}"
        if lookup is None:
            xw = T.add(T.matmul(E, store[f"{p}.W_ih"]), store[f"{p}.b"])
        else:
            table, tokens = lookup
            uniq, inv = np.unique(tokens, return_inverse=True)
            rows = T.add(T.matmul(T.gather_rows(table, uniq), store[f"{p}.W_ih"]), store[f"{p}.b"])
            xw = T.gather_rows(rows, inv.reshape(tokens.shape))
        outs.append(lstm_scan(xw, store[f"{p}.W_hh"], reverse=reverse))
    fwd, bwd = outs
    L = E.shape[1]
    Q_w = T.concat([fwd, bwd], axis=-1)
    Q_s = T.concat([fwd[:, L - 1 : L, :], bwd[:, 0:1, :]], axis=-1)
    return Q_w, Q_s
