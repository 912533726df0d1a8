"""Writers for the downstream toolkit's on-disk formats.

Feature CSV: UTF-8, header ``id,label,f0,...``, label in {0,1}, decimal float
features, LF endings. Tensor files: magic ``DFT1``, version u8 = 1, rank u8,
rank x u32 little-endian dims, f32 row-major payload. Both are written
atomically (temp file + rename).
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np


def atomic_write_bytes(path: str, payload: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def feature_csv(ids, labels, features) -> bytes:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or len(ids) != features.shape[0] or len(labels) != len(ids):
        raise ValueError("ids, labels and features must align")
    lines = ["id,label," + ",".join(f"f{j}" for j in range(features.shape[1]))]
    for row_id, label, row in zip(ids, labels, features):
        if any(c in row_id for c in ',"\r\n'):
            raise ValueError(f"row id {row_id!r} contains CSV delimiter characters")
        if label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {label!r}")
        if not np.all(np.isfinite(row)):
            raise ValueError(f"non-finite feature value for id {row_id!r}")
        lines.append(f"{row_id},{label}," + ",".join(repr(float(v)) for v in row))
    return ("\n".join(lines) + "\n").encode("utf-8")


def write_feature_csv(path: str, ids, labels, features) -> None:
    atomic_write_bytes(path, feature_csv(ids, labels, features))


def write_tensor(tensor: np.ndarray, path: str) -> None:
    arr = np.ascontiguousarray(tensor, dtype=np.float32)
    if arr.ndim < 1 or arr.ndim > 255:
        raise ValueError("tensor rank must be in [1, 255]")
    if any(d < 1 for d in arr.shape) or any(d >= 1 << 32 for d in arr.shape):
        raise ValueError("tensor dims must be in [1, 2^32)")
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor values must be finite")
    header = b"DFT1" + struct.pack("<BB", 1, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    atomic_write_bytes(path, header + arr.tobytes(order="C"))
