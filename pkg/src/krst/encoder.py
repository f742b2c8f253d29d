"""Video-side and question-side representations."""
from dataclasses import dataclass

import numpy as np

from . import nn
from . import tensor as T
from .errors import DimensionError, VocabularyError


@dataclass
class QuestionEncoding:
    E: T.Tensor
    Q_w: T.Tensor
    Q_s: T.Tensor
    tokens: np.ndarray


def project_objects(O_s, O_p, W_o):
    """Object rows mapped to width C by ``W_o`` of shape (C, C_s + 6).

    Objects are rows here, so the product is ``[O_s, O_p] @ W_o.T``.
    """
    O_s, O_p = T.as_tensor(O_s), T.as_tensor(O_p)
    if W_o.shape[1] != O_s.shape[-1] + O_p.shape[-1]:
        raise DimensionError(
            f"project_objects: W_o {W_o.shape} needs {O_s.shape[-1]} + {O_p.shape[-1]} input columns"
        )
    return T.matmul(T.concat_features(O_s, O_p), T.transpose(W_o))


def tile_index(n_frames, K):
    return np.repeat(np.arange(n_frames), K)


def tile(I, K):
    """Repeat each frame row K times: row t*K + k of the result is row t."""
    I = T.as_tensor(I)
    idx = tile_index(I.shape[-2], K)
    return T.getitem(I, (Ellipsis, idx, slice(None)))


def fuse_video_object(O, I, store, prefix, K):
    """Object features augmented with their frame's video-level feature."""
    O, I = T.as_tensor(O), T.as_tensor(I)
    if O.shape[-2] != I.shape[-2] * K:
        raise DimensionError(f"fuse_video_object: {O.shape[-2]} object rows but {I.shape[-2]} frames x K={K}")
    return nn.apply_mlp2(store, prefix, T.concat_features(O, tile(I, K)))


def lookup_tokens(tokens, table):
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens.size == 0 or tokens.shape[-1] == 0:
        raise DimensionError("empty question")
    bad = tokens[(tokens < 0) | (tokens >= table.shape[0])]
    if bad.size:
        raise VocabularyError(f"token id {int(bad[0])} not in vocabulary of size {table.shape[0]}")
    return T.gather_rows(table, tokens)


def encode_question(tokens, table, store, prefix):
    """Embed token ids (B, L) and run the BiLSTM stored under ``prefix``."""
    tokens = np.atleast_2d(np.asarray(tokens, dtype=np.int64))
    E = lookup_tokens(tokens, table)
    Q_w, Q_s = nn.bilstm_encode(E, store, prefix, lookup=(table, tokens))
    return QuestionEncoding(E=E, Q_w=Q_w, Q_s=Q_s, tokens=tokens)


def build_two_stream(banks, tokens, store, cfg, training=False, rng=None):
    """Run the object and question encoders once per enabled stream.

    ``banks`` maps stream name to ``(I, O_s, O_p)`` arrays with leading
    batch axis. Each stream reads only parameters under its own prefix,
    except the shared word-embedding table.
    """
    shapes = {s: (b[0].shape[-2], b[1].shape[-2]) for s, b in banks.items()}
    if len(set(shapes.values())) > 1:
        raise DimensionError(f"streams disagree on frame/object counts: {shapes}")
    table = store["embed.table"]
    out = {}
    for stream in cfg.streams:
        I, O_s, O_p = banks[stream]
        O = project_objects(O_s, O_p, store[f"{stream}.W_o"])
        O_hat = fuse_video_object(O, I, store, f"{stream}.fuse", cfg.K)
        O_hat = nn.dropout(O_hat, cfg.dropout, training, rng)
        q = encode_question(tokens, table, store, f"{stream}.bilstm")
        out[stream] = (O_hat, q)
    return out
