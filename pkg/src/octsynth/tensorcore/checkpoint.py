"""Flat binary checkpoint container.

Layout (all integers little-endian, documented in README.md):

    magic   4 bytes  b"TCKP"
    version u32      currently 1
    count   u32      number of entries
    then per entry, sorted by name:
      name_len u16, name utf-8 bytes
      dtype    u8   (0 = float32, 1 = float64)
      ndim     u8
      dims     u32 * ndim
      data     IEEE-754 little-endian values, C order
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError

MAGIC = b"TCKP"
CHECKPOINT_VERSION = 1

_DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODE_FOR = {np.dtype("float32"): 0, np.dtype("float64"): 1}


def save_checkpoint(path, arrays):
    """Write a name -> array mapping; accepts a ParamStore or a plain dict."""
    if hasattr(arrays, "arrays"):
        arrays = arrays.arrays()
    items = sorted(arrays.items())
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<II", CHECKPOINT_VERSION, len(items))
    for name, arr in items:
        arr = np.asarray(arr)
        if arr.dtype not in _CODE_FOR:
            arr = arr.astype(np.float32)
        nb = name.encode("utf-8")
        blob += struct.pack("<H", len(nb)) + nb
        blob += struct.pack("<BB", _CODE_FOR[arr.dtype], arr.ndim)
        blob += struct.pack(f"<{arr.ndim}I", *arr.shape)
        blob += arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes(order="C")
    tmp = Path(str(path) + ".tmp")
    tmp.write_bytes(bytes(blob))
    tmp.replace(path)


def load_checkpoint(path):
    """Read a checkpoint back into a dict of name -> ndarray."""
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic at byte 0, expected {MAGIC!r}")
    (version, count) = struct.unpack_from("<II", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version} at byte 4")
    off = 12
    out = {}
    for _ in range(count):
        try:
            (name_len,) = struct.unpack_from("<H", raw, off)
            off += 2
            name = raw[off : off + name_len].decode("utf-8")
            off += name_len
            code, ndim = struct.unpack_from("<BB", raw, off)
            off += 2
            dims = struct.unpack_from(f"<{ndim}I", raw, off)
            off += 4 * ndim
            dt = _DTYPE_CODES[code]
            n_items = int(np.prod(dims)) if ndim else 1
            end = off + n_items * dt.itemsize
            if end > len(raw):
                raise FormatError(f"{path}: truncated payload for {name!r} at byte {off}")
            arr = np.frombuffer(raw[off:end], dtype=dt).reshape(dims).copy()
            off = end
        except (struct.error, KeyError) as e:
            raise FormatError(f"{path}: malformed entry at byte {off}: {e}") from e
        out[name] = arr
    if off != len(raw):
        raise FormatError(f"{path}: {len(raw) - off} trailing bytes at byte {off}")
    return out
