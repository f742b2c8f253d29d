"""Training, evaluation, ablations, gradient checks and attention dumps."""
import json
import logging
import os
import time

import numpy as np

from . import checkpoint, decoder, synth
from . import tensor as T
from .config import ABLATIONS, apply_ablation
from .data import check_compatible, load_split, make_batch
from .decoder import AnswerHeadConfig
from .errors import ConfigError, NumericError
from .gradcheck import finite_diff_check
from .model import ModelConfig, batch_loss, forward_sequences, init_params, predictions
from .optim import AdamState, adam_step
from .params import ParamStore

log = logging.getLogger("krst")

CHECKPOINT_NAME = "checkpoint.krst"


def _dump_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1)
        fh.write("\n")


def generate(cfg, out_dir=None, offset_seed=None):
    params = synth.SceneParams(T=cfg.T, K=cfg.K, n_categories=cfg.n_categories, C=cfg.C, C_s=cfg.C_s, noise=cfg.noise, M=cfg.M)
    return synth.generate_dataset(
        out_dir or cfg.data or cfg.out, cfg.task, cfg.n_train, cfg.n_val, cfg.n_test, cfg.seed, params, offset_seed
    )


# -- evaluation ---------------------------------------------------------------


def metric_name(head_kind):
    return "mse" if head_kind == "count" else "accuracy"


def compute_metrics(task, head_kind, preds, targets, answers=None):
    """Accuracy (or MSE for counts) from per-sample predictions."""
    preds = np.asarray(preds)
    targets = np.asarray(targets)
    out = {"task": task, "n_samples": int(len(preds))}
    if head_kind == "count":
        out["mse"] = float(np.mean((preds.astype(np.float64) - targets) ** 2))
    else:
        out["accuracy"] = float(np.mean(preds == targets))
    if head_kind == "openended" and answers is not None:
        per = {}
        for c, name in enumerate(answers):
            hit = targets == c
            if hit.any():
                per[name] = {"n": int(hit.sum()), "accuracy": float(np.mean(preds[hit] == c))}
        out["per_class"] = per
    return out


def evaluate_split(store, mcfg, split, batch_size=64):
    """Metrics record and per-sample predictions over a whole split."""
    head = mcfg.head.task
    preds, targets, rows = [], [], []
    loss_sum = 0.0
    for start in range(0, len(split), batch_size):
        idx = np.arange(start, min(start + batch_size, len(split)))
        batch = make_batch(split, idx, head)
        loss, raw = batch_loss(store, mcfg, batch, training=False)
        loss_sum += float(loss.data) * len(idx)
        p = predictions(mcfg, raw)
        preds.extend(p.tolist())
        targets.extend(batch["target"].tolist())
        for i, pi, ri in zip(idx, p, raw):
            rows.append({"id": split.samples[i]["id"], "prediction": pi.item(), "target": split.samples[i]["answer"], "raw": np.atleast_1d(ri).tolist()})
    targets = np.asarray(targets)
    metrics = compute_metrics(split.meta["task"], head, preds, targets, split.answers)
    metrics["loss"] = loss_sum / len(split)
    metrics["split"] = split.name
    return metrics, rows


def model_from_checkpoint(path):
    arrays, meta = checkpoint.load(path)
    mcfg = ModelConfig.from_dict(meta["model"]).validate()
    store = init_params(mcfg, 0)
    store.load_arrays(arrays)
    return store, mcfg, meta


def evaluate(checkpoint_path, data_dir, split_name="test", out_dir=None):
    store, mcfg, _ = model_from_checkpoint(checkpoint_path)
    split = load_split(data_dir, split_name)
    metrics, rows = evaluate_split(store, mcfg, split)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        _dump_json(os.path.join(out_dir, "metrics.json"), metrics)
        with open(os.path.join(out_dir, f"predictions.{split_name}.jsonl"), "w") as fh:
            for r in rows:
                fh.write(json.dumps(r, sort_keys=True) + "\n")
    return metrics


# -- training -------------------------------------------------------------------


def train(cfg, splits=None, evaluate_test=True):
    """Shuffled mini-batch Adam on the task loss.

    Writes ``checkpoint.krst``, ``train_log.jsonl``, ``metrics.json`` and
    ``config.json`` under ``cfg.out``. Every byte depends only on the
    dataset and ``cfg.seed``.
    """
    cfg.validate()
    if splits is None:
        splits = {s: load_split(cfg.data, s) for s in ("train", "val", "test")}
    train_split = splits["train"]
    check_compatible(train_split, cfg)
    mcfg = cfg.model_config(len(train_split.tokens), len(train_split.answers), train_split.meta["count_range"])
    store = init_params(mcfg, [cfg.seed, 1])
    state = AdamState(lr=cfg.lr)
    rng = np.random.default_rng([cfg.seed, 2])
    head = mcfg.head.task
    os.makedirs(cfg.out, exist_ok=True)
    log_lines = []
    n = len(train_split)
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        total = 0.0
        first = None
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            batch = make_batch(train_split, idx, head)
            loss, _ = batch_loss(store, mcfg, batch, training=True, rng=rng)
            value = float(loss.data)
            if not np.isfinite(value):
                raise NumericError(f"non-finite training loss at epoch {epoch}")
            loss.backward()
            adam_step(store, state)
            total += value * len(idx)
            first = value if first is None else first
        record = {"epoch": epoch, "train_loss": total / n, "first_batch_loss": first}
        if "val" in splits:
            val, _ = evaluate_split(store, mcfg, splits["val"])
            record["val_loss"] = val["loss"]
            record[f"val_{metric_name(head)}"] = val[metric_name(head)]
        log_lines.append(json.dumps(record, sort_keys=True))
        log.info("epoch %d  %s  (%.1fs)", epoch, record, time.perf_counter() - t0)
    with open(os.path.join(cfg.out, "train_log.jsonl"), "w") as fh:
        fh.write("".join(line + "\n" for line in log_lines))
    # paths stay out of the checkpoint so the same run in another directory is byte-identical
    run = {k: v for k, v in cfg.to_dict().items() if k not in ("data", "out")}
    meta = {"model": mcfg.to_dict(), "run": run, "tokens": train_split.tokens, "answers": train_split.answers}
    ckpt = os.path.join(cfg.out, CHECKPOINT_NAME)
    checkpoint.save(ckpt, store, meta)
    _dump_json(os.path.join(cfg.out, "config.json"), cfg.to_dict())
    metrics = None
    if evaluate_test and "test" in splits:
        metrics, rows = evaluate_split(store, mcfg, splits["test"])
        _dump_json(os.path.join(cfg.out, "metrics.json"), metrics)
        with open(os.path.join(cfg.out, "predictions.test.jsonl"), "w") as fh:
            for r in rows:
                fh.write(json.dumps(r, sort_keys=True) + "\n")
    return {"checkpoint": ckpt, "metrics": metrics, "store": store, "model_config": mcfg}


def run_ablation(cfg, ablations, splits=None):
    """Train the full model and one variant per ablation on the same seed.

    Returns table rows ``{variant, metric, value, delta}``; delta is
    variant minus full model.
    """
    for name in ablations:
        if name not in ABLATIONS:
            raise ConfigError(f"unknown ablation {name!r}; expected one of {ABLATIONS}")
    if splits is None:
        splits = {s: load_split(cfg.data, s) for s in ("train", "val", "test")}
    variants = [("full", cfg)] + [(f"w/o {name}", apply_ablation(cfg, name)) for name in ablations]
    rows = []
    base = None
    key = metric_name(cfg.head_kind)
    for label, vcfg in variants:
        sub = label.replace("w/o ", "no_")
        vcfg = vcfg.replace(out=os.path.join(cfg.out, sub))
        result = train(vcfg, splits)
        value = result["metrics"][key]
        base = value if base is None else base
        rows.append({"variant": label, "metric": key, "value": value, "delta": value - base,
                     "n_params": sum(t.data.size for _, t in result["store"].items())})
    os.makedirs(cfg.out, exist_ok=True)
    _dump_json(os.path.join(cfg.out, "ablation.json"), rows)
    with open(os.path.join(cfg.out, "ablation.md"), "w") as fh:
        fh.write(format_table(rows))
    return rows


def format_table(rows):
    lines = ["| variant | metric | value | delta |", "|---|---|---|---|"]
    for r in rows:
        lines.append(f"| {r['variant']} | {r['metric']} | {r['value']:.4f} | {r['delta']:+.4f} |")
    return "\n".join(lines) + "\n"


# -- gradient check ---------------------------------------------------------------


def quadratic_check(eps=1e-6):
    store = ParamStore()
    store.add("x", np.ones(4))
    return finite_diff_check(lambda: T.total(T.square(store["x"])), store, eps=eps)


def gradcheck_instance(head_kind, cfg, T_=2, K=3, L=4, M=2, seed=0):
    """A tiny random batch and parameter store for one head."""
    rng = np.random.default_rng([seed, 7])
    vocab = 12
    head = AnswerHeadConfig(task=head_kind, M=M, answer_vocab_size=5, count_range=(1, 10))
    mcfg = ModelConfig(
        vocab_size=vocab, T=T_, K=K, C=cfg.C, C_s=cfg.C_s, C_o=cfg.C_o, C_w=cfg.C_w, dropout=0.0,
        two_stream=cfg.two_stream, word_attention=cfg.word_attention, object_attention=cfg.object_attention,
        graph=cfg.graph_config(), head=head,
    ).validate()
    store = init_params(mcfg, [seed, 8])
    B = 2
    banks = {}
    for s in mcfg.streams:
        corners = rng.uniform(0.0, 0.5, size=(B, T_ * K, 2))
        size = rng.uniform(0.05, 0.2, size=(B, T_ * K, 2))
        boxes = np.concatenate([corners, corners + size, size], axis=-1)
        banks[s] = (rng.normal(size=(B, T_, cfg.C)), rng.normal(size=(B, T_ * K, cfg.C_s)), boxes)
    n_seq = B * M if head_kind == "multichoice" else B
    sequences = [list(rng.integers(0, vocab, size=L)) for _ in range(n_seq)]
    seq_video = np.repeat(np.arange(B), M) if head_kind == "multichoice" else np.arange(B)
    if head_kind == "multichoice":
        target = rng.integers(0, M, size=B)
    elif head_kind == "openended":
        target = rng.integers(0, 5, size=B)
    else:
        target = rng.integers(1, 11, size=B).astype(np.float64)
    batch = {"banks": banks, "sequences": sequences, "seq_video": seq_video, "target": target}
    return store, mcfg, batch


def gradcheck_report(cfg, tol=1e-4, n_coords=200, eps=1e-6):
    """Quadratic sanity check plus one full-pipeline check per head."""
    report = []
    q = quadratic_check(eps)
    report.append({"case": "quadratic", "max_rel_error": q.max_rel_error, "n_checked": q.n_checked,
                   "n_rejected": q.n_rejected, "passed": q.passed(1e-9)})
    for head in decoder.TASK_KINDS:
        store, mcfg, batch = gradcheck_instance(head, cfg)
        t0 = time.perf_counter()
        r = finite_diff_check(lambda: batch_loss(store, mcfg, batch)[0], store, eps=eps, n_coords=n_coords,
                              rng=np.random.default_rng(cfg.seed))
        report.append({"case": head, "max_rel_error": r.max_rel_error, "n_checked": r.n_checked,
                       "n_rejected": r.n_rejected, "worst_param": r.worst_param, "passed": r.passed(tol),
                       "seconds": time.perf_counter() - t0})
    return report


# -- attention dump ---------------------------------------------------------------


def dump_attn(checkpoint_path, data_dir, sample_id, split_name="test", frame=0, obj=0):
    """Word weights, object scores and one object's spatial neighbors.

    Multi-choice samples are traced with the correct candidate appended.
    Neighbors come from the first graph layer of each stream.
    """
    store, mcfg, _ = model_from_checkpoint(checkpoint_path)
    split = load_split(data_dir, split_name)
    i = split.index_of(sample_id)
    batch = make_batch(split, [i], mcfg.head.task)
    if mcfg.head.task == "multichoice":
        pick = int(batch["target"][0])
        tokens = np.array([batch["sequences"][pick]])
    else:
        tokens = np.array(batch["sequences"][:1])
    T_, K = mcfg.T, mcfg.K
    if not (0 <= frame < T_ and 0 <= obj < K):
        raise ConfigError(f"object ({frame}, {obj}) outside {T_} frames x {K} objects")
    trace = {}
    forward_sequences(store, mcfg, batch["banks"], tokens, training=False, trace=trace)
    words = [split.tokens[t] for t in tokens[0]]
    streams = {}
    for s, tr in trace.items():
        first = tr["neighbors"][0]
        if mcfg.graph.disentangled:
            nb_idx = first.idx[frame, obj]
            nb_dist = first.dist[frame, obj]
            nbrs = [[frame, int(j), float(d)] for j, d in zip(nb_idx, nb_dist)]
        else:
            row = frame * K + obj
            nbrs = [[int(j) // K, int(j) % K, float(d)] for j, d in zip(first.idx[0, row], first.dist[0, row])]
        streams[s] = {
            "word_weights": tr["A_w"][0, :, 0].tolist(),
            "object_scores": tr["A_o"][0, :, 0].reshape(T_, K).tolist(),
            "neighbors": {"frame": frame, "object": obj, "neighbors": nbrs},
        }
    first_stream = streams[mcfg.streams[0]]
    return {
        "id": sample_id,
        "words": words,
        "word_weights": first_stream["word_weights"],
        "object_scores": first_stream["object_scores"],
        "neighbors": first_stream["neighbors"],
        "streams": streams,
    }
