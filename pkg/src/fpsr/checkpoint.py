"""Versioned binary checkpoint container.

Layout (all integers little-endian):

    magic   4 bytes  b"FPSR"
    version u32      currently 1
    cfg_len u64      length of the canonical config text
    config  cfg_len bytes of UTF-8
    count   u32      number of records
    then per record:
        name_len u16, name UTF-8,
        dtype    u8   (0 = float32, 1 = float64, 2 = raw bytes),
        ndim     u8, dims u32 each,
        payload  little-endian array bytes

Records are written sorted by name, so save -> load -> save round-trips
byte-identically. Files are written atomically (temp file + rename).
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError

MAGIC = b"FPSR"
VERSION = 1

_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("u1")}
_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1, np.dtype("uint8"): 2}


def save(path, config_text, arrays):
    """Write config text plus named arrays; `arrays` maps name -> ndarray."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", VERSION)
    cfg = config_text.encode("utf-8")
    blob += struct.pack("<Q", len(cfg))
    blob += cfg
    blob += struct.pack("<I", len(arrays))
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        if arr.dtype not in _CODES:
            raise CheckpointError(f"{name}: unsupported dtype {arr.dtype}")
        nm = name.encode("utf-8")
        blob += struct.pack("<H", len(nm))
        blob += nm
        blob += struct.pack("<BB", _CODES[arr.dtype], arr.ndim)
        for d in arr.shape:
            blob += struct.pack("<I", d)
        code = _CODES[arr.dtype]
        blob += arr.astype(_DTYPES[code]).tobytes()
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(bytes(blob))
    os.replace(tmp, path)


class _Reader:
    def __init__(self, data, path):
        self.data = data
        self.off = 0
        self.path = path

    def take(self, n):
        if self.off + n > len(self.data):
            raise CheckpointError(f"{self.path}: truncated checkpoint")
        chunk = self.data[self.off:self.off + n]
        self.off += n
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load(path):
    """Read a checkpoint; returns (config_text, {name: ndarray})."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    r = _Reader(raw, path)
    if r.take(4) != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise CheckpointError(f"{path}: format version {version}, expected {VERSION}")
    (cfg_len,) = r.unpack("<Q")
    config_text = r.take(cfg_len).decode("utf-8")
    (count,) = r.unpack("<I")
    arrays = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        code, ndim = r.unpack("<BB")
        if code not in _DTYPES:
            raise CheckpointError(f"{path}: unknown dtype code {code} for {name!r}")
        shape = tuple(r.unpack("<I")[0] for _ in range(ndim))
        dtype = _DTYPES[code]
        n_items = int(np.prod(shape)) if shape else 1
        payload = r.take(n_items * dtype.itemsize)
        arrays[name] = np.frombuffer(payload, dtype=dtype).reshape(shape).copy()
    if r.off != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - r.off} trailing bytes")
    return config_text, arrays
