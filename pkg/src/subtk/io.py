"""File formats: atomic writes, canonical JSON, CSV, node-vector binaries, Matrix Market.

Node-vector layout (little-endian)::

    8 bytes   magic  b"SUBTKVEC"
    uint32    ndim
    uint64    shape[0] ... shape[ndim-1]
    2 bytes   dtype tag b"f8"
    float64   payload, row-major, prod(shape) values

Vectors are stored on the full node array of the grid (zeros on the
boundary and outside the mask), so a file is plot-ready on its own.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np
import scipy.io

MAGIC = b"SUBTKVEC"
DTYPE_TAG = b"f8"


def atomic_write_bytes(path, data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix="." + path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def canonical_json(obj) -> str:
    """Sorted keys, fixed separators, trailing newline: byte-stable for equal input."""
    return json.dumps(_plain(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if not np.isfinite(v):
            return None
        return v
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, obj) -> Path:
    return atomic_write_bytes(path, canonical_json(obj).encode())


def sha256_of(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


def write_csv(path, header, rows) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return atomic_write_bytes(path, buf.getvalue().encode())


def read_csv(path):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, [row for row in r]


def write_vector(path, arr) -> Path:
    arr = np.ascontiguousarray(np.asarray(arr, dtype="<f8"))
    head = MAGIC + struct.pack("<I", arr.ndim) + struct.pack("<%dQ" % arr.ndim, *arr.shape) + DTYPE_TAG
    return atomic_write_bytes(path, head + arr.tobytes(order="C"))


def read_vector(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise ValueError("%s is not a node-vector file" % path)
    (ndim,) = struct.unpack_from("<I", data, 8)
    off = 12
    shape = struct.unpack_from("<%dQ" % ndim, data, off)
    off += 8 * ndim
    tag = data[off : off + 2]
    if tag != DTYPE_TAG:
        raise ValueError("unsupported dtype tag %r" % tag)
    off += 2
    count = int(np.prod(shape)) if ndim else 1
    if len(data) - off != 8 * count:
        raise ValueError("payload size does not match the header")
    return np.frombuffer(data, dtype="<f8", count=count, offset=off).reshape(shape).copy()


def write_matrix_market(path, A, comment: str = "") -> Path:
    buf = io.BytesIO()
    scipy.io.mmwrite(buf, A, comment=comment, symmetry="symmetric")
    return atomic_write_bytes(path, buf.getvalue())


def read_matrix_market(path):
    return scipy.io.mmread(str(path)).tocsr()
