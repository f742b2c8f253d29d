"""Binary checkpoint format.

Layout: the 5 magic bytes ``KRST1``, a little-endian uint64 manifest
length, the manifest as UTF-8 JSON, then every parameter's float64
payload (little-endian, row-major) back to back. Manifest offsets are
relative to the first payload byte.
"""
import json
import struct

import numpy as np

from .errors import FormatError

MAGIC = b"KRST1"
_HEADER = len(MAGIC) + 8


def encode(arrays, meta=None):
    entries = []
    offset = 0
    payloads = []
    for name in sorted(arrays):
        arr = np.asarray(arrays[name], dtype="<f8", order="C")
        raw = arr.tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "dtype": "f64", "offset": offset, "nbytes": len(raw)})
        payloads.append(raw)
        offset += len(raw)
    manifest = {"format": "KRST1", "meta": meta or {}, "params": entries}
    text = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<Q", len(text)) + text + b"".join(payloads)


def decode(blob):
    """Inverse of :func:`encode`; returns ``(arrays, meta)``."""
    if len(blob) < _HEADER or blob[: len(MAGIC)] != MAGIC:
        raise FormatError("bad magic, not a KRST1 checkpoint", offset=0)
    (mlen,) = struct.unpack_from("<Q", blob, len(MAGIC))
    if _HEADER + mlen > len(blob):
        raise FormatError(f"manifest length {mlen} runs past end of file", offset=len(MAGIC))
    try:
        manifest = json.loads(blob[_HEADER : _HEADER + mlen].decode("utf-8"))
        entries = manifest["params"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise FormatError(f"unreadable manifest: {exc}", offset=_HEADER) from None
    base = _HEADER + mlen
    arrays = {}
    for e in entries:
        try:
            name, shape, off, nbytes, dtype = e["name"], tuple(e["shape"]), e["offset"], e["nbytes"], e["dtype"]
        except (KeyError, TypeError):
            raise FormatError(f"malformed manifest entry {e!r}", offset=_HEADER) from None
        if dtype != "f64":
            raise FormatError(f"unsupported dtype {dtype!r} for {name!r}", offset=_HEADER)
        expect = 8 * int(np.prod(shape, dtype=np.int64))
        if nbytes != expect:
            raise FormatError(f"{name!r}: {nbytes} bytes declared, shape needs {expect}", offset=base + off)
        if off < 0 or base + off + nbytes > len(blob):
            raise FormatError(f"{name!r}: payload truncated", offset=base + off)
        arrays[name] = np.frombuffer(blob, dtype="<f8", count=nbytes // 8, offset=base + off).reshape(shape).astype(np.float64)
    end = base + sum(e["nbytes"] for e in entries)
    if end != len(blob):
        raise FormatError(f"{len(blob) - end} trailing bytes after payload", offset=end)
    return arrays, manifest.get("meta", {})


def save(path, store, meta=None):
    blob = encode(store.snapshot(), meta)
    with open(path, "wb") as fh:
        fh.write(blob)


def load(path):
    with open(path, "rb") as fh:
        return decode(fh.read())
