"""Binary tensor (PMT1) and embedding-batch (PME1) files.

Both formats are a single-line JSON header, a newline, then little-endian
float64 payload in row-major order.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .errors import FormatError
from .tensor import check_shape, check_tensor

_LE_F64 = np.dtype("<f8")


def _read_header(fh, magic: str, fields: tuple[str, ...]) -> dict:
    line = fh.readline()
    if not line.endswith(b"\n"):
        raise FormatError("missing newline-terminated JSON header")
    try:
        header = json.loads(line)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FormatError(f"header is not valid JSON: {exc}") from None
    if not isinstance(header, dict):
        raise FormatError("header must be a JSON object")
    if header.get("magic") != magic:
        raise FormatError(f"field 'magic': expected {magic!r}, got {header.get('magic')!r}")
    if header.get("dtype", "f64") != "f64":
        raise FormatError(f"field 'dtype': only 'f64' is supported, got {header.get('dtype')!r}")
    for key in fields:
        value = header.get(key)
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            raise FormatError(f"field {key!r}: expected a positive integer, got {value!r}")
    return header


def _read_payload(fh, count: int) -> np.ndarray:
    data = fh.read()
    if len(data) != count * 8:
        raise FormatError(f"payload has {len(data)} bytes, expected {count * 8} ({count} float64 values)")
    return np.frombuffer(data, dtype=_LE_F64).astype(np.float64)


def _write(path, header: dict, values: np.ndarray) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(json.dumps(header, separators=(",", ":")).encode() + b"\n")
        fh.write(np.ascontiguousarray(values, dtype=_LE_F64).tobytes())
    os.replace(tmp, path)


def save_tensor(path, A) -> None:
    """Write a ``(n,) * k`` tensor as PMT1."""
    A = check_tensor(A)
    header = {"magic": "PMT1", "k": A.ndim, "n": A.shape[0], "dtype": "f64", "order": "row-major"}
    _write(path, header, A)


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = _read_header(fh, "PMT1", ("k", "n"))
        if header.get("order", "row-major") != "row-major":
            raise FormatError(f"field 'order': only 'row-major' is supported, got {header.get('order')!r}")
        shape = check_shape(header["n"], header["k"])
        values = _read_payload(fh, header["n"] ** header["k"])
    return check_tensor(values.reshape(shape), name=str(path))


def save_embeddings(path, X) -> None:
    """Write a ``(k, n, d)`` array as PME1 in [view][point][dim] order."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3:
        raise FormatError(f"embeddings must have shape (k, n, d), got {X.shape}")
    k, n, d = X.shape
    _write(path, {"magic": "PME1", "k": k, "n": n, "d": d, "dtype": "f64"}, X)


def load_embeddings(path) -> np.ndarray:
    """Read a PME1 file.  Unit norms are checked by the consumers, not here."""
    with open(path, "rb") as fh:
        header = _read_header(fh, "PME1", ("k", "n", "d"))
        k, n, d = header["k"], header["n"], header["d"]
        values = _read_payload(fh, k * n * d)
    return values.reshape(k, n, d)


def tensor_to_json(A) -> list:
    """Nested-list form for small tensors."""
    return check_tensor(A).tolist()


def tensor_from_json(obj) -> np.ndarray:
    try:
        A = np.array(obj, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"not a rectangular nested array of numbers: {exc}") from None
    return check_tensor(A)
