"""Relative-relation message passing over dynamic k-NN graphs.

A node aggregates, over its k nearest neighbors in feature space, the
message ``W_a x_j + W_r (x_j - x_i)`` and applies ReLU to the pooled
result. Spatial graphs connect objects of one frame; the temporal graph
connects frame vectors. Weight matrices keep the (out, in) layout, so
rows are multiplied by their transpose.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels
from . import tensor as T
from .errors import ConfigError, DimensionError

POOLING = ("max", "mean", "sum")


def ratio_to_k(alpha, pool):
    """Neighbor count from a ratio: half-up rounding, at least one."""
    return int(min(pool, max(1, np.floor(alpha * pool + 0.5))))


@dataclass
class GraphConfig:
    alpha_spatial: float = 0.6
    alpha_temporal: float = 0.8
    H: int = 2
    pooling_spatial: str = "max"
    pooling_aggregation: str = "max"
    pooling_temporal: str = "sum"
    relative_enabled: bool = True
    absolute_enabled: bool = True
    disentangled: bool = True

    def validate(self):
        if not (self.relative_enabled or self.absolute_enabled):
            raise ConfigError("relative and absolute relations cannot both be disabled")
        if self.H < 1:
            raise ConfigError(f"graph depth H must be >= 1, got {self.H}")
        for a in (self.alpha_spatial, self.alpha_temporal):
            if not 0.0 <= a <= 1.0:
                raise ConfigError(f"neighbor ratio {a} outside [0, 1]")
        for p in (self.pooling_spatial, self.pooling_aggregation, self.pooling_temporal):
            if p not in POOLING:
                raise ConfigError(f"unknown pooling {p!r}")
        return self

    def k_spatial(self, K):
        return ratio_to_k(self.alpha_spatial, K)

    def k_temporal(self, T_):
        return ratio_to_k(self.alpha_temporal, T_)

    def k_holistic(self, K, T_):
        return ratio_to_k(self.alpha_spatial, K * T_)


@dataclass
class NeighborIndex:
    idx: np.ndarray
    dist: np.ndarray


def knn_neighbors(X, k, include_self=True):
    """Nearest rows by squared Euclidean distance, ties to the lower index.

    ``X`` is (n, c) or grouped (G, n, c); neighbors never cross groups.
    """
    data = X.data if isinstance(X, T.Tensor) else np.asarray(X, dtype=np.float64)
    squeeze = data.ndim == 2
    if squeeze:
        data = data[None]
    n = data.shape[1]
    avail = n if include_self else n - 1
    if not 1 <= k <= avail:
        raise ConfigError(f"k={k} neighbors requested from {avail} candidates")
    if not np.all(np.isfinite(data)):
        raise ConfigError("k-NN on non-finite features")
    idx, dist = kernels.knn(data, k, include_self)
    T.log_branch("knn", idx)
    if squeeze:
        idx, dist = idx[0], dist[0]
    return NeighborIndex(idx, dist)


def relative_term(x_nbr, x_center, W_r):
    return T.matmul(T.sub(x_nbr, x_center), T.transpose(W_r))


def relative_message(X, nbrs, W_a, W_r, pooling, relative_enabled=True, absolute_enabled=True, activate=True):
    """One message-passing step over precomputed neighbors.

    ``X`` is (G, n, c_in) or (n, c_in); ``nbrs.idx`` matches it with a
    trailing k axis. Set ``activate=False`` for the pooled pre-activation.
    """
    if not (relative_enabled or absolute_enabled):
        raise ConfigError("relative and absolute relations cannot both be disabled")
    X = T.as_tensor(X)
    idx = nbrs.idx
    squeeze = X.ndim == 2
    if squeeze:
        X = T.reshape(X, (1,) + X.shape)
        idx = idx[None]
    G, n, c_in = X.shape
    if idx.shape[:2] != (G, n):
        raise DimensionError(f"neighbor index {idx.shape} does not match features {X.shape}")
    flat_idx = idx + (np.arange(G) * n)[:, None, None]
    X2 = T.reshape(X, (G * n, c_in))
    # project every row once: W_r (x_j - x_i) == W_r x_j - W_r x_i
    nbr_proj = T.matmul(X2, T.transpose(W_a)) if absolute_enabled else None
    if relative_enabled:
        rel_proj = T.matmul(X2, T.transpose(W_r))
        nbr_proj = rel_proj if nbr_proj is None else T.add(nbr_proj, rel_proj)
    terms = T.gather_rows(nbr_proj, flat_idx)
    if relative_enabled:
        terms = T.sub(terms, T.reshape(rel_proj, (G, n, 1, rel_proj.shape[-1])))
    out = T.reduce(terms, axis=2, mode=pooling)
    if activate:
        out = T.relu(out)
    if squeeze:
        out = T.reshape(out, out.shape[1:])
    return out


def _layer_weights(store, prefix, cfg):
    W_a = store[f"{prefix}.W_a"] if cfg.absolute_enabled else None
    W_r = store[f"{prefix}.W_r"] if cfg.relative_enabled else None
    return W_a, W_r


def spatial_layer(V, W_a, W_r, cfg, K, trace=None):
    """Message passing inside each frame; frames never exchange messages.

    ``V`` is (B, T*K, c). Returns (B, T*K, C).
    """
    V = T.as_tensor(V)
    B, TK, c = V.shape
    if TK % K:
        raise DimensionError(f"{TK} object rows do not split into frames of K={K}")
    X = T.reshape(V, (B * (TK // K), K, c))
    nbrs = knn_neighbors(X, cfg.k_spatial(K))
    if trace is not None:
        trace.append(nbrs)
    out = relative_message(X, nbrs, W_a, W_r, cfg.pooling_spatial, cfg.relative_enabled, cfg.absolute_enabled)
    return T.reshape(out, (B, TK, out.shape[-1]))


def aggregate_frames(S, K, pooling="max"):
    """Pool the K object rows of every frame: (B, T*K, C) -> (B, T, C).

    The result does not depend on the object order within a frame, to the bit.
    """
    S = T.as_tensor(S)
    *lead, TK, C = S.shape
    if TK % K:
        raise DimensionError(f"{TK} object rows do not split into frames of K={K}")
    grouped = T.reshape(S, tuple(lead) + (TK // K, K, C))
    return T.reduce(grouped, axis=-2, mode=pooling, order_free=True)


def temporal_layer(F, W_a, W_r, cfg, trace=None):
    """Message passing across the T frame vectors of each video."""
    F = T.as_tensor(F)
    nbrs = knn_neighbors(F, cfg.k_temporal(F.shape[-2]))
    if trace is not None:
        trace.append(nbrs)
    return relative_message(F, nbrs, W_a, W_r, cfg.pooling_temporal, cfg.relative_enabled, cfg.absolute_enabled)


def holistic_layer(V, W_a, W_r, cfg, K, trace=None):
    """One layer over all objects of a video; neighbors may come from any frame."""
    V = T.as_tensor(V)
    nbrs = knn_neighbors(V, cfg.k_holistic(K, V.shape[-2] // K))
    if trace is not None:
        trace.append(nbrs)
    return relative_message(V, nbrs, W_a, W_r, cfg.pooling_spatial, cfg.relative_enabled, cfg.absolute_enabled)


def init_graph_params(store, prefix, cfg, width, rng, gain=np.sqrt(3.0)):
    kinds = ("spatial", "temporal") if cfg.disentangled else ("holistic",)
    for kind in kinds:
        for h in range(cfg.H):
            p = f"{prefix}.{kind}.layer{h}"
            if cfg.absolute_enabled:
                store.uniform(f"{p}.W_a", (width, width), width, rng, gain)
            if cfg.relative_enabled:
                store.uniform(f"{p}.W_r", (width, width), width, rng, gain)


def run_graphs(V, store, prefix, cfg, K, trace=None):
    """Stacked spatial then temporal layers, or the holistic ablation.

    Neighbors are recomputed from each layer's input. Returns the object
    rows (B, T*K, C) and the frame rows (B, T, C).
    """
    cfg.validate()
    S = T.as_tensor(V)
    if cfg.disentangled:
        for h in range(cfg.H):
            S = spatial_layer(S, *_layer_weights(store, f"{prefix}.spatial.layer{h}", cfg), cfg, K, trace)
        F = aggregate_frames(S, K, cfg.pooling_aggregation)
        for h in range(cfg.H):
            F = temporal_layer(F, *_layer_weights(store, f"{prefix}.temporal.layer{h}", cfg), cfg, trace)
        return S, F
    for h in range(cfg.H):
        S = holistic_layer(S, *_layer_weights(store, f"{prefix}.holistic.layer{h}", cfg), cfg, K, trace)
    return S, aggregate_frames(S, K, cfg.pooling_aggregation)
