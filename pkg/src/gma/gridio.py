"""Grid file format: one-line JSON header + raw little-endian float64.

Layout: a single UTF-8 JSON line (terminated by ``\n``) holding the
dimension, grid shape and byte order, followed immediately by the raw
array bytes in row-major order.  A CSV export is provided for small
grids (index coordinates plus value per row).
"""

from __future__ import annotations

import json

import numpy as np

HEADER_KEYS = {"schema_version", "n", "grid_shape", "byte_order", "dtype"}


def write_grid(path, values):
    values = np.ascontiguousarray(np.asarray(values, dtype="<f8"))
    if not np.all(np.isfinite(values)):
        raise ValueError("write_grid: non-finite values")
    header = {
        "schema_version": 1,
        "n": values.ndim,
        "grid_shape": list(values.shape),
        "byte_order": "little",
        "dtype": "float64",
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(values.tobytes(order="C"))


def read_grid(path):
    with open(path, "rb") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ValueError(f"grid file {path}: malformed header") from exc
        if not isinstance(header, dict) or not HEADER_KEYS <= set(header):
            raise ValueError(f"grid file {path}: header misses required keys")
        if header["byte_order"] != "little" or header["dtype"] != "float64":
            raise ValueError(f"grid file {path}: unsupported encoding")
        shape = tuple(int(s) for s in header["grid_shape"])
        if len(shape) != int(header["n"]):
            raise ValueError(f"grid file {path}: shape/dimension mismatch")
        count = int(np.prod(shape))
        raw = fh.read(8 * count)
        if len(raw) != 8 * count:
            raise ValueError(f"grid file {path}: truncated payload")
        values = np.frombuffer(raw, dtype="<f8").reshape(shape)
    if not np.all(np.isfinite(values)):
        raise ValueError(f"grid file {path}: non-finite values")
    return values.copy()


def write_csv(path, values, max_points=65536):
    """Index-coordinate CSV for small grids: i1,...,in,value."""
    values = np.asarray(values)
    if values.size > max_points:
        raise ValueError("write_csv: grid too large for CSV export")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(f"i{a+1}" for a in range(values.ndim)) + ",value\n")
        for idx in np.ndindex(*values.shape):
            coords = ",".join(str(i) for i in idx)
            fh.write(f"{coords},{float(values[idx])!r}\n")
