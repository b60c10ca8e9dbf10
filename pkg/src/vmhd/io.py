"""Atomic file output and binary checkpoint records."""
from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np


def atomic_write_bytes(path, data: bytes) -> Path:
    """Write ``data`` to a sibling temp file, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def atomic_write_text(path, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


# Ensemble record: magic(8) | version <u4 | Np <u8 | Np x (X0 X1 X2 V0 V1 V2 w) <f8
ENSEMBLE_MAGIC = b"VMHDPART"
# Field record: magic(8) | version <u4 | d <u4 | N_j d x <u4 | L_j d x <f8 | u(3,N..) | B(3,N..) <f8
FIELD_MAGIC = b"VMHDFLD\x00"
VERSION = 1


def pack_ensemble(X: np.ndarray, V: np.ndarray, w: np.ndarray) -> bytes:
    n = w.shape[0]
    rec = np.empty((n, 7), dtype="<f8")
    rec[:, 0:3] = X
    rec[:, 3:6] = V
    rec[:, 6] = w
    return ENSEMBLE_MAGIC + struct.pack("<IQ", VERSION, n) + rec.tobytes(order="C")


def unpack_ensemble(data: bytes):
    if data[:8] != ENSEMBLE_MAGIC:
        raise ValueError("not an ensemble checkpoint (bad magic)")
    version, n = struct.unpack_from("<IQ", data, 8)
    if version != VERSION:
        raise ValueError(f"unsupported ensemble checkpoint version {version}")
    offset = 8 + struct.calcsize("<IQ")
    expected = offset + n * 7 * 8
    if len(data) != expected:
        raise ValueError(f"truncated ensemble checkpoint: {len(data)} bytes, expected {expected}")
    rec = np.frombuffer(data, dtype="<f8", offset=offset).reshape(n, 7).astype(np.float64)
    return rec[:, 0:3].copy(), rec[:, 3:6].copy(), rec[:, 6].copy()


def pack_fields(n: tuple[int, ...], lengths: tuple[float, ...], u: np.ndarray, b: np.ndarray) -> bytes:
    d = len(n)
    head = FIELD_MAGIC + struct.pack("<II", VERSION, d)
    head += struct.pack(f"<{d}I", *n) + struct.pack(f"<{d}d", *lengths)
    body = np.ascontiguousarray(u, dtype="<f8").tobytes() + np.ascontiguousarray(b, dtype="<f8").tobytes()
    return head + body


def unpack_fields(data: bytes):
    if data[:8] != FIELD_MAGIC:
        raise ValueError("not a field checkpoint (bad magic)")
    version, d = struct.unpack_from("<II", data, 8)
    if version != VERSION:
        raise ValueError(f"unsupported field checkpoint version {version}")
    off = 16
    n = struct.unpack_from(f"<{d}I", data, off)
    off += 4 * d
    lengths = struct.unpack_from(f"<{d}d", data, off)
    off += 8 * d
    count = 3 * int(np.prod(n))
    if len(data) != off + 2 * count * 8:
        raise ValueError("truncated field checkpoint")
    arr = np.frombuffer(data, dtype="<f8", offset=off).astype(np.float64)
    u = arr[:count].reshape((3,) + tuple(n)).copy()
    b = arr[count:].reshape((3,) + tuple(n)).copy()
    return tuple(n), tuple(lengths), u, b
