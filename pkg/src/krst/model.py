"""Parameter layout and the batched forward pass of the full network."""
from dataclasses import asdict, dataclass, field

import numpy as np

from . import decoder, encoder, graph, keyword, nn
from . import tensor as T
from .decoder import AnswerHeadConfig
from .errors import ConfigError
from .graph import GraphConfig
from .params import ParamStore

EMBED_DIM = 300


@dataclass
class ModelConfig:
    vocab_size: int
    T: int = 4
    K: int = 4
    C: int = 64
    C_s: int = 64
    C_o: int = 64
    C_w: int = 64
    dropout: float = 0.0
    two_stream: bool = True
    word_attention: bool = True
    object_attention: bool = True
    graph: GraphConfig = field(default_factory=GraphConfig)
    head: AnswerHeadConfig = field(default_factory=AnswerHeadConfig)

    @property
    def streams(self):
        return ("appearance", "motion") if self.two_stream else ("appearance",)

    def validate(self):
        if self.C != self.C_o:
            raise ConfigError(f"stacked graph layers need C == C_o, got {self.C} and {self.C_o}")
        if self.C_w % 2:
            raise ConfigError(f"C_w must be even for the BiLSTM halves, got {self.C_w}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        self.graph.validate()
        self.head.validate()
        return self

    def to_dict(self):
        d = asdict(self)
        d["head"]["count_range"] = list(self.head.count_range)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        g = GraphConfig(**d.pop("graph", {}))
        h = dict(d.pop("head", {}))
        if "count_range" in h:
            h["count_range"] = tuple(h["count_range"])
        return cls(graph=g, head=AnswerHeadConfig(**h), **d)


def init_params(cfg, seed):
    """Deterministic initialization; parameters exist only where used."""
    cfg.validate()
    rng = np.random.default_rng(seed)
    store = ParamStore()
    store.add("embed.table", rng.normal(0.0, 1.0, size=(cfg.vocab_size, EMBED_DIM)))
    half = cfg.C_w // 2
    for s in cfg.streams:
        store.uniform(f"{s}.W_o", (cfg.C, cfg.C_s + 6), cfg.C_s + 6, rng, nn.LINEAR_GAIN)
        nn.init_mlp2(store, f"{s}.fuse", 2 * cfg.C, cfg.C_o, cfg.C_o, rng)
        nn.init_lstm(store, f"{s}.bilstm.fwd", EMBED_DIM, half, rng)
        nn.init_lstm(store, f"{s}.bilstm.bwd", EMBED_DIM, half, rng)
        if cfg.object_attention:
            if cfg.word_attention:
                nn.init_mlp2(store, f"{s}.word_attn", cfg.C_w, cfg.C_w, 1, rng)
            else:
                store.uniform(f"{s}.sent_proj", (cfg.C_w, EMBED_DIM), cfg.C_w, rng, nn.LINEAR_GAIN)
            store.uniform(f"{s}.W_q", (cfg.C_o, EMBED_DIM), EMBED_DIM, rng)
        graph.init_graph_params(store, s, cfg.graph, cfg.C_o, rng)
        decoder.init_bilinear(store, f"{s}.bil_s", cfg.C, cfg.C_w, half, rng)
        decoder.init_bilinear(store, f"{s}.bil_t", cfg.C, cfg.C_w, half, rng)
        decoder.init_fusion(store, f"{s}.fusion", cfg.C_w, rng)
    if cfg.two_stream:
        nn.init_linear(store, "merge", cfg.C_w, cfg.C_w, rng, gain=nn.RELU_GAIN)
    decoder.init_head(store, cfg.head, cfg.C_w, rng)
    return store


def stream_forward(O_hat, q, store, cfg, stream, trace=None):
    kw = keyword.keyword_nodes(O_hat, q, store, stream, cfg.word_attention, cfg.object_attention)
    nbr_trace = [] if trace is not None else None
    S, F = graph.run_graphs(kw.V, store, stream, cfg.graph, cfg.K, nbr_trace)
    sp = decoder.bilinear_attend(S, q.Q_w, *(store[f"{stream}.bil_s.{n}"] for n in "UVP"))
    tp = decoder.bilinear_attend(F, q.Q_w, *(store[f"{stream}.bil_t.{n}"] for n in "UVP"))
    z = decoder.fuse(sp, tp, q.Q_s, store, f"{stream}.fusion")
    if trace is not None:
        trace[stream] = {"A_w": kw.A_w.data, "A_o": kw.A_o.data, "V": kw.V.data, "neighbors": nbr_trace}
    return z


def forward_sequences(store, cfg, banks, tokens, training=False, rng=None, trace=None):
    """Fused vectors for S equal-length sequences, one video per sequence.

    ``banks`` maps stream to ``(I, O_s, O_p)`` with leading axis S and
    ``tokens`` is (S, L). Returns (S, C_w).
    """
    pipes = encoder.build_two_stream(banks, tokens, store, cfg, training, rng)
    zs = [stream_forward(O_hat, q, store, cfg, s, trace) for s, (O_hat, q) in pipes.items()]
    if cfg.two_stream:
        z = decoder.merge_streams(zs[0], zs[1], store["merge.W"], store["merge.b"])
    else:
        z = decoder.merge_streams(zs[0], None)
    z = nn.dropout(z, cfg.dropout, training, rng)
    return T.reshape(z, (z.shape[0], cfg.C_w))


def forward(store, cfg, banks, sequences, seq_video, training=False, rng=None):
    """Fused vectors for token sequences of any lengths.

    ``banks`` holds one row per video; ``seq_video[i]`` names the video row
    that sequence i is asked about. Sequences are bucketed by length and
    run bucket by bucket in increasing length; the result rows follow the
    input order.
    """
    seq_video = np.asarray(seq_video, dtype=np.int64)
    lengths = np.array([len(s) for s in sequences])
    pieces, order = [], []
    for L in np.unique(lengths):
        members = np.flatnonzero(lengths == L)
        toks = np.array([sequences[i] for i in members], dtype=np.int64)
        vids = seq_video[members]
        sub = {s: tuple(a[vids] for a in banks[s]) for s in cfg.streams}
        pieces.append(forward_sequences(store, cfg, sub, toks, training, rng))
        order.append(members)
    z = pieces[0] if len(pieces) == 1 else T.concat(pieces, axis=0)
    order = np.concatenate(order)
    if np.array_equal(order, np.arange(len(order))):
        return z
    inverse = np.empty_like(order)
    inverse[order] = np.arange(len(order))
    return T.getitem(z, inverse)


def batch_loss(store, cfg, batch, training=False, rng=None):
    """Loss tensor and raw predictions for one batch.

    ``batch`` has ``banks``, ``sequences``, ``seq_video`` and ``target``.
    Multichoice batches list the M candidate sequences of each video
    consecutively.
    """
    z = forward(store, cfg, batch["banks"], batch["sequences"], batch["seq_video"], training, rng)
    task = cfg.head.task
    target = batch["target"]
    if task == "multichoice":
        scores = T.reshape(decoder.score(z, store), (-1, cfg.head.M))
        loss = T.reduce(decoder.hinge_loss(scores, target), axis=0, mode="mean")
        return loss, scores.data
    if task == "openended":
        logits = decoder.class_logits(z, store)
        return decoder.cross_entropy(logits, target), logits.data
    pred = decoder.regress_count(z, store)
    return decoder.mse_loss(pred, target), pred.data


def predictions(cfg, raw):
    if cfg.head.task == "multichoice":
        return decoder.predict_multichoice(raw)
    if cfg.head.task == "openended":
        return np.argmax(raw, axis=-1)
    return decoder.round_count(raw, cfg.head.count_range)
