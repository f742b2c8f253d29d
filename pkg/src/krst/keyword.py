"""Keyword attention: word weights, object relevance, node features."""
from dataclasses import dataclass

import numpy as np

from . import nn
from . import tensor as T
from .errors import DimensionError


@dataclass
class KeywordAttentionOut:
    A_w: T.Tensor
    E_hat: T.Tensor
    A_o: T.Tensor
    V: T.Tensor


def word_attention(Q_w, E, store, prefix):
    """Softmax word weights (B, L, 1) and the weighted embedding (B, 1, 300).

    The attended feature lives in the raw embedding space, not Q_w's.
    """
    Q_w, E = T.as_tensor(Q_w), T.as_tensor(E)
    if Q_w.shape[-2] == 0:
        raise DimensionError("word_attention: empty sequence")
    if Q_w.shape[-2] != E.shape[-2]:
        raise DimensionError(f"word_attention: Q_w has {Q_w.shape[-2]} rows, E has {E.shape[-2]}")
    A_w = T.softmax(nn.apply_mlp2(store, prefix, Q_w), axis=-2)
    return A_w, T.matmul(T.transpose(A_w), E)


def object_attention(O_hat, E_hat, W_q):
    """Sigmoid relevance per object from the attended question feature."""
    O_hat, E_hat = T.as_tensor(O_hat), T.as_tensor(E_hat)
    if W_q.shape != (O_hat.shape[-1], E_hat.shape[-1]):
        raise DimensionError(f"object_attention: W_q is {W_q.shape}, need {(O_hat.shape[-1], E_hat.shape[-1])}")
    guide = T.transpose(T.matmul(E_hat, T.transpose(W_q)))
    return T.sigmoid(T.matmul(O_hat, guide))


def augment_nodes(O_hat, A_o):
    """Scale each node by (1 + its score)."""
    O_hat, A_o = T.as_tensor(O_hat), T.as_tensor(A_o)
    if A_o.shape[-2] != O_hat.shape[-2]:
        raise DimensionError(f"augment_nodes: {A_o.shape[-2]} scores for {O_hat.shape[-2]} nodes")
    return T.mul(T.add(A_o, 1.0), O_hat)


def keyword_nodes(O_hat, q, store, prefix, word_attn=True, object_attn=True):
    """Full keyword block for one stream.

    With ``word_attn`` off the sentence vector, projected to the embedding
    width, replaces the attended feature. With ``object_attn`` off every
    score is pinned to zero and the nodes pass through unchanged.
    The attended feature only feeds the object scores, so with object
    attention off no word-attention parameters exist and ``A_w`` is
    reported as uniform.
    """
    L = q.Q_w.shape[-2]
    A_w = T.Tensor(np.full(q.Q_w.shape[:-1] + (1,), 1.0 / L))
    E_hat = None
    if object_attn and word_attn:
        A_w, E_hat = word_attention(q.Q_w, q.E, store, f"{prefix}.word_attn")
    elif object_attn:
        E_hat = T.matmul(q.Q_s, store[f"{prefix}.sent_proj"])
    if object_attn:
        A_o = object_attention(O_hat, E_hat, store[f"{prefix}.W_q"])
    else:
        A_o = T.Tensor(np.zeros(O_hat.shape[:-1] + (1,)))
    return KeywordAttentionOut(A_w=A_w, E_hat=E_hat, A_o=A_o, V=augment_nodes(O_hat, A_o))
