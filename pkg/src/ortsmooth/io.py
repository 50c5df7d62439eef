"""Reading and writing fields: grayscale images and the ORTF tensor container.

Images are binary PGM (P5, 8 or 16 bit) or grayscale PNG; intensities map to
[0, 1] by dividing by the file's maximum value, and the field's dims are
``(height, width)``.

ORTF layout (all little-endian)::

    b"ORTF"  u8 version (=1)  u8 p  u32 dims[p]  f64 values[prod(dims)]

with values in row-major order.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from .lattice import LatticeError, LatticeField

TENSOR_MAGIC = b"ORTF"
TENSOR_VERSION = 1


class FormatError(ValueError):
    """Unsupported or malformed file."""


def _pgm_header(data: bytes):
    """Parse the P5 header; returns (width, height, maxval, payload offset)."""
    tokens, pos = [], 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header")
        tok = data[start:pos]
        if not tok.isdigit():
            raise FormatError(f"bad PGM header field {tok!r}")
        tokens.append(int(tok))
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise FormatError("truncated PGM header")
    width, height, maxval = tokens
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise FormatError(f"invalid PGM size or maxval ({width}x{height}, maxval {maxval})")
    return width, height, maxval, pos + 1


def _read_pgm(data: bytes) -> LatticeField:
    width, height, maxval, off = _pgm_header(data)
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = width * height * dtype.itemsize
    if len(data) - off < need:
        raise FormatError(f"truncated PGM payload: need {need} bytes, found {len(data) - off}")
    raw = np.frombuffer(data, dtype=dtype, count=width * height, offset=off)
    if raw.max(initial=0) > maxval:
        raise FormatError("PGM sample exceeds maxval")
    return LatticeField((height, width), raw.astype(np.float64) / maxval)


def _read_png(path) -> LatticeField:
    from PIL import Image

    with Image.open(path) as img:
        mode = img.mode
        if mode == "L":
            scale = 255.0
        elif mode.startswith("I;16") or mode == "I":
            scale = 65535.0
        elif mode == "1":
            scale = 1.0
        else:
            raise FormatError(f"only grayscale PNG is supported (got mode {mode!r})")
        arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise FormatError("PNG is not single-channel")
    if arr.max(initial=0) > scale:
        raise FormatError("PNG sample exceeds 16-bit range")
    return LatticeField(arr.shape, arr / scale)


def read_image(path) -> LatticeField:
    path = Path(path)
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] == b"P5":
        return _read_pgm(data)
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        return _read_png(path)
    if data[:2] in (b"P1", b"P2", b"P3", b"P4", b"P6"):
        raise FormatError(f"unsupported netpbm variant {data[:2].decode()}; only binary P5 is read")
    raise FormatError(f"{path}: not a P5 PGM or PNG file")


def quantize(field: LatticeField, depth: int = 8) -> np.ndarray:
    if depth not in (8, 16):
        raise ValueError("depth must be 8 or 16")
    top = (1 << depth) - 1
    q = np.rint(np.clip(field.values, 0.0, 1.0) * top)
    return q.astype(np.uint16 if depth == 16 else np.uint8).reshape(field.dims)


def write_image(field: LatticeField, path, depth: int = 8) -> None:
    """Clip to [0, 1], quantize to ``depth`` bits and write PGM (default) or PNG by suffix."""
    if field.p != 2:
        raise LatticeError(f"images must be 2-D, got p={field.p}")
    q = quantize(field, depth)
    path = Path(path)
    if path.suffix.lower() == ".png":
        from PIL import Image

        img = Image.fromarray(q)  # uint8 -> "L", uint16 -> "I;16"
        img.save(path, format="PNG")
        return
    height, width = field.dims
    header = f"P5\n{width} {height}\n{(1 << depth) - 1}\n".encode("ascii")
    body = q.astype(">u2").tobytes() if depth == 16 else q.tobytes()
    with open(path, "wb") as fh:
        fh.write(header + body)


def write_tensor(field: LatticeField, path) -> None:
    header = TENSOR_MAGIC + struct.pack("<BB", TENSOR_VERSION, field.p)
    header += struct.pack(f"<{field.p}I", *field.dims)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(field.values.astype("<f8").tobytes())


def read_tensor(path) -> LatticeField:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 6:
        raise FormatError("truncated ORTF header")
    if data[:4] != TENSOR_MAGIC:
        raise FormatError("bad ORTF magic")
    version, p = struct.unpack_from("<BB", data, 4)
    if version != TENSOR_VERSION:
        raise FormatError(f"unsupported ORTF version {version}")
    if p < 1:
        raise FormatError("ORTF dimension count must be >= 1")
    off = 6 + 4 * p
    if len(data) < off:
        raise FormatError("truncated ORTF header")
    dims = struct.unpack_from(f"<{p}I", data, 6)
    count = int(np.prod(dims, dtype=np.int64))
    if len(data) - off != 8 * count:
        kind = "truncated" if len(data) - off < 8 * count else "oversized"
        raise FormatError(f"{kind} ORTF payload: expected {8 * count} bytes, found {len(data) - off}")
    values = np.frombuffer(data, dtype="<f8", count=count, offset=off)
    return LatticeField(dims, values.astype(np.float64))


def is_image_path(path) -> bool:
    return os.fspath(path).lower().endswith((".pgm", ".png"))


def read_field(path) -> LatticeField:
    """Image or ORTF tensor, by file content."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    return read_tensor(path) if magic == TENSOR_MAGIC else read_image(path)


def write_field(field: LatticeField, path, depth: int = 8) -> None:
    """Image for ``.pgm``/``.png`` paths, ORTF tensor otherwise."""
    if is_image_path(path):
        write_image(field, path, depth)
    else:
        write_tensor(field, path)
