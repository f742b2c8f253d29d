"""Loading generated datasets and assembling mini-batches."""
import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import DatasetError, SampleLookupError, VocabularyError
from .features import STREAMS, ObjectFeatureBank


@dataclass
class Split:
    name: str
    meta: dict
    tokens: list
    answers: list
    samples: list
    banks: dict

    @property
    def token_id(self):
        return {t: i for i, t in enumerate(self.tokens)}

    def __len__(self):
        return len(self.samples)

    def index_of(self, sample_id):
        for i, s in enumerate(self.samples):
            if s["id"] == sample_id:
                return i
        raise SampleLookupError(f"no sample {sample_id!r} in split {self.name!r}")


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise DatasetError(f"missing dataset file {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise DatasetError(f"corrupt dataset file {path}: {exc}") from None


def load_split(data_dir, split):
    meta = _read_json(os.path.join(data_dir, "dataset.json"))
    vocab = _read_json(os.path.join(data_dir, "vocab.json"))
    path = os.path.join(data_dir, split, "samples.jsonl")
    try:
        with open(path) as fh:
            samples = [json.loads(line) for line in fh if line.strip()]
    except OSError:
        raise DatasetError(f"split {split!r} not found under {data_dir}") from None
    banks = {}
    for stream in STREAMS:
        loaded = [ObjectFeatureBank.load(os.path.join(data_dir, "features", stream, s["video"])) for s in samples]
        banks[stream] = (
            np.stack([b.I for b in loaded]),
            np.stack([b.O_s for b in loaded]),
            np.stack([b.O_p for b in loaded]),
        )
    return Split(split, meta, vocab["tokens"], vocab["answers"], samples, banks)


def encode_tokens(words, token_id):
    try:
        return [token_id[w] for w in words]
    except KeyError as exc:
        raise VocabularyError(f"word {exc.args[0]!r} not in vocabulary") from None


def make_batch(split, indices, head_kind):
    indices = np.asarray(indices, dtype=np.int64)
    tid = split.token_id
    banks = {s: tuple(a[indices] for a in arrs) for s, arrs in split.banks.items()}
    sequences, seq_video, target = [], [], []
    for row, i in enumerate(indices):
        s = split.samples[i]
        q = encode_tokens(s["question"], tid)
        if head_kind == "multichoice":
            for cand in s["candidates"]:
                sequences.append(q + encode_tokens([cand], tid))
                seq_video.append(row)
            target.append(int(s["answer"]))
        elif head_kind == "openended":
            sequences.append(q)
            seq_video.append(row)
            target.append(split.answers.index(s["answer"]))
        else:
            sequences.append(q)
            seq_video.append(row)
            target.append(float(s["answer"]))
    return {
        "banks": banks,
        "sequences": sequences,
        "seq_video": np.array(seq_video, dtype=np.int64),
        "target": np.array(target),
        "indices": indices,
    }


def check_compatible(split, cfg):
    """Raise DatasetError when the run's shapes disagree with the data."""
    I, O_s, _ = split.banks["appearance"]
    got = {"T": I.shape[1], "K": O_s.shape[1] // I.shape[1], "C": I.shape[2], "C_s": O_s.shape[2]}
    want = {"T": cfg.T, "K": cfg.K, "C": cfg.C, "C_s": cfg.C_s}
    if got != want:
        raise DatasetError(f"dataset shapes {got} do not match run config {want}")
    if split.meta["task"] != cfg.task:
        raise DatasetError(f"dataset task {split.meta['task']!r} differs from run task {cfg.task!r}")
    if split.meta["head"] == "multichoice" and split.meta["scene"]["M"] != cfg.M:
        raise DatasetError(f"dataset has M={split.meta['scene']['M']} candidates, config says {cfg.M}")
