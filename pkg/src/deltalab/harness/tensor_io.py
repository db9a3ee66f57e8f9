"""Raw tensor files: one JSON header line, then little-endian float32 data.

Header example::

    {"rows":8,"cols":4,"dtype":"f32","order":"row-major"}
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


class TensorFormatError(ValueError):
    pass


def write_tensor(path, array) -> None:
    a = np.asarray(array, dtype="<f4")
    if a.ndim != 2:
        raise TensorFormatError(f"only 2-D tensors are supported, got shape {a.shape}")
    header = json.dumps({"rows": a.shape[0], "cols": a.shape[1], "dtype": "f32",
                         "order": "row-major"}, separators=(",", ":"))
    with open(path, "wb") as f:
        f.write(header.encode("ascii") + b"\n")
        f.write(np.ascontiguousarray(a).tobytes())


def read_tensor(path) -> np.ndarray:
    """Load a tensor file, upcast to float64."""
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise TensorFormatError(f"{path}: missing header line")
    try:
        header = json.loads(raw[:nl])
    except json.JSONDecodeError as exc:
        raise TensorFormatError(f"{path}: bad header: {exc}") from exc
    if not isinstance(header, dict):
        raise TensorFormatError(f"{path}: header is not a JSON object")
    if header.get("dtype") != "f32" or header.get("order") != "row-major":
        raise TensorFormatError(f"{path}: unsupported dtype/order {header}")
    rows, cols = header.get("rows"), header.get("cols")
    if not (isinstance(rows, int) and isinstance(cols, int) and rows >= 0 and cols >= 0):
        raise TensorFormatError(f"{path}: header needs non-negative integer rows and cols")
    body = raw[nl + 1:]
    if len(body) != 4 * rows * cols:
        raise TensorFormatError(f"{path}: expected {4 * rows * cols} data bytes, found {len(body)}")
    return np.frombuffer(body, dtype="<f4").reshape(rows, cols).astype(np.float64)
