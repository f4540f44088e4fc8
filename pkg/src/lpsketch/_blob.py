"""Fixed little-endian binary layout for sketch states.

Layout::

    magic "LPSK" | u16 version | u16 kind | u16 n_fields | u16 n_arrays
    n_fields  x (f64 value)                       header scalars, in order
    n_arrays  x (u8 dtype code | u8 ndim | ndim x u32 dims | raw data)

Header scalars are stored as float64, so integers must stay below 2**53;
seeds are split into two 32-bit halves by the callers.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"LPSK"
VERSION = 1

KIND_LP = 1
KIND_L0 = 2
KIND_L0_LEVEL = 3
KIND_DIGEST = 4

_DTYPES = {1: np.dtype("<i8"), 2: np.dtype("<u8"), 3: np.dtype("<f8"), 4: np.dtype("|u1")}
_CODES = {v.kind + str(v.itemsize): k for k, v in _DTYPES.items()}


def split_seed(seed):
    return [float(seed & 0xFFFFFFFF), float(seed >> 32)]


def join_seed(lo, hi):
    return int(lo) | (int(hi) << 32)


def pack(kind, fields, arrays):
    out = [struct.pack("<4sHHHH", MAGIC, VERSION, kind, len(fields), len(arrays))]
    out.append(struct.pack(f"<{len(fields)}d", *fields))
    for arr in arrays:
        arr = np.asarray(arr)
        if arr.dtype == np.bool_:
            arr = arr.astype(np.uint8)
        code = _CODES[arr.dtype.kind + str(arr.dtype.itemsize)]
        arr = np.ascontiguousarray(arr, dtype=_DTYPES[code])
        out.append(struct.pack(f"<BB{arr.ndim}I", code, arr.ndim, *arr.shape))
        out.append(arr.tobytes())
    return b"".join(out)


def unpack(blob, kind):
    """Return ``(fields, arrays)``; raises ``ValueError`` on a malformed blob."""
    try:
        magic, version, got_kind, n_fields, n_arrays = struct.unpack_from("<4sHHHH", blob, 0)
        if magic != MAGIC:
            raise ValueError("bad magic")
        if version != VERSION:
            raise ValueError(f"unsupported blob version {version}")
        if got_kind != kind:
            raise ValueError(f"blob kind {got_kind}, expected {kind}")
        off = 12
        fields = list(struct.unpack_from(f"<{n_fields}d", blob, off))
        off += 8 * n_fields
        arrays = []
        for _ in range(n_arrays):
            code, ndim = struct.unpack_from("<BB", blob, off)
            off += 2
            shape = struct.unpack_from(f"<{ndim}I", blob, off)
            off += 4 * ndim
            dtype = _DTYPES[code]
            count = int(np.prod(shape, dtype=np.int64))
            arr = np.frombuffer(blob, dtype=dtype, count=count, offset=off).reshape(shape)
            off += count * dtype.itemsize
            arrays.append(arr.copy())
    except (struct.error, KeyError) as exc:
        raise ValueError(f"malformed blob: {exc}") from None
    if off != len(blob):
        raise ValueError("trailing bytes in blob")
    return fields, arrays
