"""Projection into question-word space, fusion, stream merging and the
three answer heads with their losses."""
from dataclasses import dataclass

import numpy as np

from . import nn
from . import tensor as T
from .errors import ConfigError, DimensionError, LabelError

TASK_KINDS = ("multichoice", "openended", "count")


@dataclass
class AnswerHeadConfig:
    task: str = "openended"
    M: int = 5
    answer_vocab_size: int = 2
    count_range: tuple = (1, 10)

    def validate(self):
        if self.task not in TASK_KINDS:
            raise ConfigError(f"unknown head {self.task!r}")
        if self.task == "multichoice" and self.M < 2:
            raise ConfigError(f"multichoice needs M >= 2 candidates, got {self.M}")
        if self.task == "openended" and self.answer_vocab_size < 2:
            raise ConfigError("open-ended head needs at least two answers")
        lo, hi = self.count_range
        if lo > hi:
            raise ConfigError(f"empty count range {self.count_range}")
        return self


def init_bilinear(store, prefix, width, c_w, rank, rng):
    store.uniform(f"{prefix}.U", (width, rank), width, rng)
    store.uniform(f"{prefix}.V", (c_w, rank), c_w, rng)
    store.uniform(f"{prefix}.P", (rank, c_w), rank, rng, nn.LINEAR_GAIN)


def bilinear_attend(X, Q_w, U, V, P):
    """Low-rank bilinear attention of question words over graph nodes.

    Logits ``(X U)(Q_w V)^T`` are softmaxed over the nodes for each word;
    row l of the output mixes the projected nodes ``X U P`` with word l's
    weights. Shapes: X (B, n, C), Q_w (B, L, C_w) -> (B, L, C_w).
    """
    X, Q_w = T.as_tensor(X), T.as_tensor(Q_w)
    if X.shape[-1] != U.shape[0] or Q_w.shape[-1] != V.shape[0] or U.shape[1] != V.shape[1]:
        raise DimensionError(f"bilinear_attend: X {X.shape}, Q_w {Q_w.shape}, U {U.shape}, V {V.shape}")
    XU = T.matmul(X, U)
    logits = T.matmul(XU, T.transpose(T.matmul(Q_w, V)))
    weights = T.softmax(logits, axis=-2)
    return T.matmul(T.transpose(weights), T.matmul(XU, P))


def init_fusion(store, prefix, c_w, rng):
    store.uniform(f"{prefix}.W_rows", (c_w, c_w), c_w, rng)
    store.uniform(f"{prefix}.W_query", (c_w, c_w), c_w, rng)
    store.uniform(f"{prefix}.b", (c_w,), c_w, rng)
    store.uniform(f"{prefix}.w", (c_w, 1), c_w, rng)
    nn.init_linear(store, f"{prefix}.out", c_w, c_w, rng, gain=nn.RELU_GAIN)


def fusion_weights(R, Q_s, store, prefix):
    """Additive attention weights over the rows of R, queried by Q_s."""
    hidden = T.tanh(
        T.add(T.add(T.matmul(R, store[f"{prefix}.W_rows"]), T.matmul(Q_s, store[f"{prefix}.W_query"])), store[f"{prefix}.b"])
    )
    return T.softmax(T.matmul(hidden, store[f"{prefix}.w"]), axis=-2)


def fuse(spatial_proj, temporal_proj, Q_s, store, prefix):
    """Attend over both projections' 2L rows with Q_s, then affine + ReLU.

    Returns (B, 1, C_w).
    """
    spatial_proj, temporal_proj = T.as_tensor(spatial_proj), T.as_tensor(temporal_proj)
    if spatial_proj.shape != temporal_proj.shape:
        raise DimensionError(f"fuse: projections differ, {spatial_proj.shape} vs {temporal_proj.shape}")
    R = T.concat([spatial_proj, temporal_proj], axis=-2)
    beta = fusion_weights(R, Q_s, store, prefix)
    pooled = T.matmul(T.transpose(beta), R)
    return T.relu(nn.linear(pooled, store[f"{prefix}.out.W"], store[f"{prefix}.out.b"]))


def merge_streams(z_app, z_motion, W=None, b=None):
    """Sum the two stream vectors and apply affine + ReLU.

    ``z_motion=None`` is the single-stream configuration: z_app is
    returned as is.
    """
    if z_motion is None:
        return T.as_tensor(z_app)
    z_app, z_motion = T.as_tensor(z_app), T.as_tensor(z_motion)
    if z_app.shape != z_motion.shape:
        raise DimensionError(f"merge_streams: widths differ, {z_app.shape} vs {z_motion.shape}")
    return T.relu(nn.linear(T.add(z_app, z_motion), W, b))


# -- heads -------------------------------------------------------------------


def init_head(store, head, c_w, rng):
    if head.task == "multichoice":
        nn.init_linear(store, "head.score", c_w, 1, rng)
    elif head.task == "openended":
        nn.init_mlp2(store, "head.cls", c_w, c_w, head.answer_vocab_size, rng)
    else:
        nn.init_linear(store, "head.count", c_w, 1, rng)


def score(z, store):
    """One scalar per fused vector: (S, C_w) -> (S,)."""
    out = nn.linear(z, store["head.score.W"], store["head.score.b"])
    return T.reshape(out, out.shape[:-1])


def hinge_loss(scores, correct):
    """Pairwise margin loss per sample.

    ``scores`` is (M,) or (B, M); returns the sum over wrong candidates of
    ``max(0, 1 - (a_correct - a_wrong))`` with the same leading shape.
    """
    scores = T.as_tensor(scores)
    squeeze = scores.ndim == 1
    if squeeze:
        scores = T.reshape(scores, (1, -1))
    correct = np.atleast_1d(np.asarray(correct, dtype=np.int64))
    B, M = scores.shape
    if correct.shape != (B,) or np.any(correct < 0) or np.any(correct >= M):
        raise LabelError(f"correct index {correct} invalid for {M} candidates")
    pos = T.getitem(scores, (np.arange(B), correct))
    margins = T.relu(T.add(T.sub(scores, T.reshape(pos, (B, 1))), 1.0))
    wrong = np.ones((B, M))
    wrong[np.arange(B), correct] = 0.0
    loss = T.reduce(T.mul(margins, wrong), axis=1, mode="sum")
    return T.reshape(loss, ()) if squeeze else loss


def predict_multichoice(scores):
    """Argmax per row; ties go to the lowest index."""
    return np.argmax(np.asarray(scores), axis=-1)


def class_logits(z, store):
    return nn.apply_mlp2(store, "head.cls", z)


def classify_openended(z, store):
    return T.softmax(class_logits(z, store), axis=-1)


def cross_entropy(logits, labels):
    """Mean negative log-likelihood of integer labels under softmax(logits)."""
    logits = T.as_tensor(logits)
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    n_cls = logits.shape[-1]
    if np.any(labels < 0) or np.any(labels >= n_cls):
        raise LabelError(f"label outside answer vocabulary of size {n_cls}")
    logp = T.reshape(T.log_softmax(logits, axis=-1), (-1, n_cls))
    picked = T.getitem(logp, (np.arange(len(labels)), labels))
    return T.mul(T.reduce(picked, axis=0, mode="mean"), -1.0)


def regress_count(z, store):
    out = nn.linear(z, store["head.count.W"], store["head.count.b"])
    return T.reshape(out, out.shape[:-1])


def mse_loss(pred, target):
    pred = T.as_tensor(pred)
    diff = T.sub(pred, np.asarray(target, dtype=np.float64))
    return T.reduce(T.reshape(T.square(diff), (-1,)), axis=0, mode="mean")


def round_count(pred, count_range):
    """Nearest integer (halves round up), clamped into the count range."""
    lo, hi = count_range
    return np.clip(np.floor(np.asarray(pred, dtype=np.float64) + 0.5), lo, hi).astype(np.int64)
