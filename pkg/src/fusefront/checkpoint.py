"""Named-matrix container used for model checkpoints and toy datasets.

Layout (little-endian)::

    b"FCKP"                 magic
    uint8                   version (1)
    uint32 n                JSON metadata length, then n bytes UTF-8 JSON
    uint32 count            number of entries
    count x entry:
        uint16 n            name length, then n bytes UTF-8 name
        uint8  ndim         then ndim x uint32 dims
        float32 payload     prod(dims) values, row-major

Entries are written in insertion order and the JSON metadata with sorted
keys, so identical inputs give identical bytes.
"""

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FeatFormatError, InvalidDataError

MAGIC = b"FCKP"
VERSION = 1


def encode_container(arrays, meta=None):
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<BI", VERSION, len(meta_bytes)), meta_bytes]
    parts.append(struct.pack("<I", len(arrays)))
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        raw_name = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw_name)) + raw_name)
        parts.append(struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.buf):
            raise FeatFormatError(f"truncated {what}: need {n} bytes", offset=self.pos)
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt, what):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size, what))


def decode_container(buf):
    """Returns ``(arrays, meta)``; arrays come back as float64."""
    r = _Reader(bytes(buf))
    if r.buf[:4] != MAGIC:
        raise FeatFormatError("missing FCKP magic", offset=0)
    r.pos = 4
    (version, meta_len) = r.unpack("<BI", "header")
    if version != VERSION:
        raise FeatFormatError(f"unsupported container version {version}", offset=4)
    try:
        meta = json.loads(r.take(meta_len, "metadata").decode("utf-8"))
    except ValueError as exc:
        raise FeatFormatError(f"bad metadata: {exc}", offset=9) from None
    (count,) = r.unpack("<I", "entry count")
    arrays = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H", "name length")
        name = r.take(name_len, "name").decode("utf-8")
        (ndim,) = r.unpack("<B", "rank")
        shape = r.unpack(f"<{ndim}I", "shape")
        start = r.pos
        n = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(r.take(4 * n, f"payload of {name!r}"), dtype="<f4").reshape(shape)
        if not np.all(np.isfinite(arr)):
            raise InvalidDataError(f"non-finite value in entry {name!r} (payload at byte {start})")
        arrays[name] = arr.astype(np.float64)
    if r.pos != len(r.buf):
        raise FeatFormatError(f"{len(r.buf) - r.pos} trailing bytes", offset=r.pos)
    return arrays, meta


def save_container(path, arrays, meta=None):
    Path(path).write_bytes(encode_container(arrays, meta))


def load_container(path):
    return decode_container(Path(path).read_bytes())
