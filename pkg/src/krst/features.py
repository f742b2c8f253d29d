"""Per-video feature banks and their on-disk format.

A video directory holds ``I.bin``, ``O_s.bin``, ``O_p.bin`` and
``meta.json``. Each ``.bin`` is a little-endian uint64 rank, that many
uint64 extents, then float64 values in row-major order.
"""
import json
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, FormatError

STREAMS = ("appearance", "motion")


def write_array(path, arr):
    arr = np.asarray(arr, dtype="<f8", order="C")
    header = struct.pack("<Q", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape)
    with open(path, "wb") as fh:
        fh.write(header + arr.tobytes())


def read_array(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 8:
        raise FormatError(f"{path}: truncated header", offset=0)
    (rank,) = struct.unpack_from("<Q", blob, 0)
    if rank > 16 or len(blob) < 8 + 8 * rank:
        raise FormatError(f"{path}: implausible rank {rank}", offset=0)
    shape = struct.unpack_from(f"<{rank}Q", blob, 8)
    start = 8 + 8 * rank
    count = int(np.prod(shape, dtype=np.int64))
    if len(blob) - start != 8 * count:
        raise FormatError(f"{path}: payload has {len(blob) - start} bytes, shape {shape} needs {8 * count}", offset=start)
    return np.frombuffer(blob, dtype="<f8", offset=start, count=count).reshape(shape).astype(np.float64)


@dataclass
class ObjectFeatureBank:
    """Frame features ``I`` (T, C), object features ``O_s`` (T*K, C_s) and
    boxes ``O_p`` (T*K, 6). Row ``t*K + k`` is object k of frame t; boxes
    are (x1, y1, x2, y2, w, h) in normalized frame coordinates."""

    I: np.ndarray
    O_s: np.ndarray
    O_p: np.ndarray
    K: int
    stream: str = "appearance"

    @property
    def T(self):
        return self.I.shape[0]

    def validate(self):
        if self.stream not in STREAMS:
            raise DimensionError(f"unknown stream {self.stream!r}")
        T = self.I.shape[0]
        if self.O_s.shape[0] != T * self.K or self.O_p.shape[0] != T * self.K:
            raise DimensionError(
                f"object rows must equal T*K = {T}*{self.K}; got O_s {self.O_s.shape}, O_p {self.O_p.shape}"
            )
        if self.O_p.shape[1] != 6:
            raise DimensionError(f"O_p must have 6 columns, got {self.O_p.shape}")
        x1, y1, x2, y2, w, h = self.O_p.T
        if np.any(x2 < x1) or np.any(y2 < y1):
            raise DimensionError("box corners out of order")
        if not (np.allclose(w, x2 - x1, atol=1e-9, rtol=0) and np.allclose(h, y2 - y1, atol=1e-9, rtol=0)):
            raise DimensionError("box width/height disagree with corners")
        return self

    def save(self, directory):
        os.makedirs(directory, exist_ok=True)
        write_array(os.path.join(directory, "I.bin"), self.I)
        write_array(os.path.join(directory, "O_s.bin"), self.O_s)
        write_array(os.path.join(directory, "O_p.bin"), self.O_p)
        meta = {"T": self.T, "K": self.K, "C": self.I.shape[1], "C_s": self.O_s.shape[1], "stream": self.stream}
        with open(os.path.join(directory, "meta.json"), "w") as fh:
            json.dump(meta, fh, sort_keys=True)

    @classmethod
    def load(cls, directory):
        try:
            with open(os.path.join(directory, "meta.json")) as fh:
                meta = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise FormatError(f"{directory}: unreadable meta.json ({exc})") from None
        bank = cls(
            I=read_array(os.path.join(directory, "I.bin")),
            O_s=read_array(os.path.join(directory, "O_s.bin")),
            O_p=read_array(os.path.join(directory, "O_p.bin")),
            K=int(meta["K"]),
            stream=meta.get("stream", "appearance"),
        )
        if bank.T != meta["T"] or bank.I.shape[1] != meta["C"] or bank.O_s.shape[1] != meta["C_s"]:
            raise FormatError(f"{directory}: arrays disagree with meta.json {meta}")
        return bank.validate()


def box_from_corners(x1, y1, x2, y2):
    return np.stack([x1, y1, x2, y2, x2 - x1, y2 - y1], axis=-1)
