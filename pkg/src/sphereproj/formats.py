"""Binary containers and image previews.

SPHD  depth maps and strips:  "SPHD" u32 version=1, u32 rows, u32 cols, f32 R,
      then rows*cols f32 values row-major.
SPHC  contour views:          "SPHC" u32 rows, u32 cols, u32 views, then
      views*rows*cols f32 values in [0, 1].
PGM   8-bit P5 previews.
All integers and floats are little-endian.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

SPHD_MAGIC = b"SPHD"
SPHC_MAGIC = b"SPHC"


class FormatError(ValueError):
    pass


def atomic_write(path: str | Path, data: bytes) -> None:
    """Write to a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode_sphd(values: np.ndarray, radius: float) -> bytes:
    values = np.asarray(values)
    if values.ndim != 2:
        raise ValueError("SPHD holds a 2-D array")
    rows, cols = values.shape
    head = SPHD_MAGIC + struct.pack("<IIIf", 1, rows, cols, radius)
    return head + np.ascontiguousarray(values, dtype="<f4").tobytes()


def decode_sphd(data: bytes) -> tuple[np.ndarray, float]:
    if data[:4] != SPHD_MAGIC:
        raise FormatError("not an SPHD file")
    version, rows, cols, radius = struct.unpack_from("<IIIf", data, 4)
    if version != 1:
        raise FormatError(f"unsupported SPHD version {version}")
    body = data[20:]
    if len(body) != 4 * rows * cols:
        raise FormatError("SPHD payload size mismatch")
    return np.frombuffer(body, dtype="<f4").reshape(rows, cols).astype(np.float64), float(radius)


def write_sphd(path, values, radius: float) -> None:
    atomic_write(path, encode_sphd(values, radius))


def read_sphd(path) -> tuple[np.ndarray, float]:
    return decode_sphd(Path(path).read_bytes())


def encode_sphc(views: np.ndarray) -> bytes:
    """``views`` is (n_views, rows, cols) with values in [0, 1]."""
    views = np.asarray(views)
    if views.ndim != 3:
        raise ValueError("SPHC holds a (views, rows, cols) array")
    if views.size and (views.min() < 0 or views.max() > 1):
        raise ValueError("SPHC values must lie in [0, 1]")
    n, rows, cols = views.shape
    return SPHC_MAGIC + struct.pack("<III", rows, cols, n) + np.ascontiguousarray(views, dtype="<f4").tobytes()


def decode_sphc(data: bytes) -> np.ndarray:
    if data[:4] != SPHC_MAGIC:
        raise FormatError("not an SPHC file")
    rows, cols, n = struct.unpack_from("<III", data, 4)
    body = data[16:]
    if len(body) != 4 * rows * cols * n:
        raise FormatError("SPHC payload size mismatch")
    return np.frombuffer(body, dtype="<f4").reshape(n, rows, cols).astype(np.float64)


def write_sphc(path, views) -> None:
    atomic_write(path, encode_sphc(views))


def read_sphc(path) -> np.ndarray:
    return decode_sphc(Path(path).read_bytes())


def to_gray(values: np.ndarray) -> np.ndarray:
    """Scale to 0..255 over [min(0, vmin), vmax].

    Zero is the no-hit code of depth maps, so it is always part of the range;
    a constant depth map therefore renders as a uniform bright image rather
    than as noise stretched over the full gray scale.
    """
    v = np.asarray(values, dtype=np.float64)
    lo = min(0.0, float(v.min()))
    hi = float(v.max())
    if hi <= lo:
        return np.zeros(v.shape, dtype=np.uint8)
    return np.clip(np.rint((v - lo) / (hi - lo) * 255.0), 0, 255).astype(np.uint8)


def encode_pgm(gray: np.ndarray) -> bytes:
    gray = np.asarray(gray)
    if gray.dtype != np.uint8 or gray.ndim != 2:
        raise ValueError("PGM expects a 2-D uint8 image")
    rows, cols = gray.shape
    return f"P5\n{cols} {rows}\n255\n".encode() + gray.tobytes()


def decode_pgm(data: bytes) -> np.ndarray:
    fields = []
    pos = 0
    while len(fields) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        fields.append(data[pos:end])
        pos = end
    if fields[0] != b"P5":
        raise FormatError("not a binary PGM")
    cols, rows, maxval = (int(f) for f in fields[1:])
    if maxval != 255:
        raise FormatError("only 8-bit PGM is supported")
    return np.frombuffer(data[pos + 1:pos + 1 + rows * cols], dtype=np.uint8).reshape(rows, cols)


def write_pgm(path, gray) -> None:
    atomic_write(path, encode_pgm(gray))


def read_pgm(path) -> np.ndarray:
    return decode_pgm(Path(path).read_bytes())
