"""Raster input/output: PGM (P2/P5, 8 or 16 bit) and headerless CSV."""
from __future__ import annotations

import hashlib
import re
from pathlib import Path

import numpy as np

from .errors import DataError

_TOKEN = re.compile(rb"\s*(#[^\n]*\n\s*)*([^\s#]+)")


def _pgm_header(buf: bytes):
    fields, pos = [], 0
    while len(fields) < 4:
        m = _TOKEN.match(buf, pos)
        if m is None:
            raise DataError("truncated PGM header")
        fields.append(m.group(2))
        pos = m.end()
    return fields, pos


def read_pgm(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    (magic, w, h, maxval), pos = _pgm_header(buf)
    try:
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise DataError(f"{path}: bad PGM header") from exc
    if not 0 < maxval < 65536:
        raise DataError(f"{path}: PGM maxval {maxval} out of range")
    if magic == b"P2":
        vals = buf[pos:].split()
        if len(vals) < w * h:
            raise DataError(f"{path}: expected {w * h} samples, found {len(vals)}")
        return np.array([int(v) for v in vals[: w * h]], dtype=np.float64).reshape(h, w)
    if magic == b"P5":
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        data = buf[pos + 1: pos + 1 + w * h * dtype.itemsize]  # single whitespace after maxval
        if len(data) < w * h * dtype.itemsize:
            raise DataError(f"{path}: truncated PGM raster")
        return np.frombuffer(data, dtype=dtype).reshape(h, w).astype(np.float64)
    raise DataError(f"{path}: unsupported PGM magic {magic!r}")


def write_pgm(path, arr: np.ndarray, maxval: int | None = None, binary: bool = True) -> None:
    a = np.asarray(arr)
    if a.ndim != 2:
        raise DataError("PGM raster must be 2-D")
    a = np.rint(a).astype(np.int64)
    if a.min() < 0:
        raise DataError("PGM samples must be non-negative")
    if maxval is None:
        maxval = 255 if a.max() <= 255 else 65535
    h, w = a.shape
    header = f"P{5 if binary else 2}\n{w} {h}\n{maxval}\n".encode()
    with open(path, "wb") as fh:
        fh.write(header)
        if binary:
            dtype = ">u2" if maxval > 255 else "u1"
            fh.write(np.clip(a, 0, maxval).astype(dtype).tobytes())
        else:
            for row in a:
                fh.write((" ".join(map(str, row)) + "\n").encode())


def read_csv(path) -> np.ndarray:
    try:
        a = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc
    return a


def write_csv(path, arr: np.ndarray) -> None:
    np.savetxt(path, np.asarray(arr, dtype=np.float64), delimiter=",", fmt="%.17g")


def read_raster(path) -> np.ndarray:
    """Load a channel by extension (``.pgm`` or anything else as CSV)."""
    p = Path(path)
    if not p.exists():
        raise DataError(f"{p}: no such file")
    if p.suffix.lower() == ".pgm":
        return read_pgm(p)
    return read_csv(p)


def read_mask(path) -> np.ndarray:
    return read_raster(path) != 0


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
