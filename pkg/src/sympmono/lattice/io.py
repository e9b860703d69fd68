"""Flat binary field format with a JSON geometry sidecar.

Layout: a fixed little-endian header followed by the raw payload in C order.

====== ======= ==========================================
offset type    meaning
====== ======= ==========================================
0      4s      magic ``b"SMF1"``
4      u2      format version
6      u1      complex dimension n
7      u1      form degree q (255 for non-form arrays)
8      u4      grid points N
12     u4      number of leading components
16     3 x i4  bundle twists (zero padded)
28     u1      dtype code (0 complex64, 1 complex128)
====== ======= ==========================================
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .geometry import TorusGeometry

MAGIC = b"SMF1"
VERSION = 1
_HEADER = struct.Struct("<4sHBBII3iB")
_DTYPES = {0: np.dtype("<c8"), 1: np.dtype("<c16")}
_CODES = {v: k for k, v in _DTYPES.items()}


class FieldFormatError(ValueError):
    """Malformed or incompatible field file."""


def write_field(path, values: np.ndarray, geom: TorusGeometry, q: int | None = None,
                twists=(), double: bool = False, meta: dict | None = None) -> Path:
    """Write ``values`` (grid axes trailing) and its sidecar ``<path>.json``."""
    path = Path(path)
    values = np.asarray(values)
    geom.check_scalar(values, "values")
    dtype = _DTYPES[1 if double else 0]
    ncomp = int(np.prod(values.shape[: -geom.real_dim], dtype=np.int64))
    tw = list(twists) + [0] * (3 - len(twists))
    header = _HEADER.pack(MAGIC, VERSION, geom.complex_dim, 255 if q is None else q,
                          geom.grid_points, ncomp, *tw, _CODES[dtype])
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(values.astype(dtype).tobytes(order="C"))
    side = {
        "geometry": geom.to_dict(),
        "form_degree": q,
        "twists": list(twists),
        "leading_shape": list(values.shape[: -geom.real_dim]),
        "dtype": dtype.name,
    }
    if meta:
        side["meta"] = meta
    Path(str(path) + ".json").write_text(json.dumps(side, indent=2, sort_keys=True) + "\n")
    return path


def read_field(path):
    """Read a field file; returns ``(values, geometry, sidecar_dict)``."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise FieldFormatError("file shorter than header")
    magic, version, n, q, N, ncomp, t1, t2, t3, code = _HEADER.unpack_from(raw)
    if magic != MAGIC or version != VERSION:
        raise FieldFormatError(f"bad magic/version {magic!r}/{version}")
    if code not in _DTYPES:
        raise FieldFormatError(f"unknown dtype code {code}")
    side_path = Path(str(path) + ".json")
    side = json.loads(side_path.read_text()) if side_path.exists() else {}
    geom = (TorusGeometry.from_dict(side["geometry"]) if "geometry" in side
            else TorusGeometry(n, N))
    if geom.complex_dim != n or geom.grid_points != N:
        raise FieldFormatError("sidecar geometry disagrees with header")
    lead = tuple(side.get("leading_shape", [ncomp] if ncomp != 1 else []))
    data = np.frombuffer(raw, dtype=_DTYPES[code], offset=_HEADER.size)
    if data.size != ncomp * geom.num_sites:
        raise FieldFormatError("payload size does not match header")
    side.setdefault("twists", [t1, t2, t3][:n])
    side.setdefault("form_degree", None if q == 255 else q)
    return data.reshape(lead + geom.shape).astype(complex), geom, side
