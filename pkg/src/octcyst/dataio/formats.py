"""Bit-exact on-disk formats: binary PGM (P5) and the OCTF float raster.

PGM carries 8-bit grayscale scans and 0/255 masks; OCTF carries float32
rasters (probability maps, prepared two-channel samples).  Both round-trip
losslessly and are written atomically (temp file + rename).
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from ..errors import (
    BadMagic,
    IoFailure,
    MalformedHeader,
    NonFiniteValue,
    TruncatedData,
    UnsupportedMaxval,
    VersionMismatch,
)

OCTF_MAGIC = b"OCTF"
OCTF_VERSION = 1


def atomic_write_bytes(path, data: bytes) -> None:
    """Write bytes to `path` via a temp file in the same directory."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        with open(tmp, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e


def _pgm_tokens(data: bytes):
    """Yield header tokens, skipping whitespace and '#' comment lines."""
    i = 0
    n = len(data)
    while i < n:
        c = data[i : i + 1]
        if c in b" \t\r\n":
            i += 1
        elif c == b"#":
            while i < n and data[i : i + 1] != b"\n":
                i += 1
        else:
            j = i
            while j < n and data[j : j + 1] not in b" \t\r\n":
                j += 1
            yield data[i:j], j
            i = j


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM (P5, maxval 255) as a uint8 array of (rows, cols)."""
    data = Path(path).read_bytes()
    tokens = _pgm_tokens(data)
    try:
        magic, _ = next(tokens)
        if magic != b"P5":
            raise MalformedHeader(f"{path}: expected P5, got {magic!r}")
        fields = []
        for _ in range(3):
            tok, end = next(tokens)
            fields.append(tok)
    except StopIteration:
        raise MalformedHeader(f"{path}: incomplete header") from None
    try:
        cols, rows, maxval = (int(t) for t in fields)
    except ValueError:
        raise MalformedHeader(f"{path}: non-numeric header fields") from None
    if cols < 1 or rows < 1:
        raise MalformedHeader(f"{path}: bad dimensions {cols}x{rows}")
    if maxval != 255:
        raise UnsupportedMaxval(f"{path}: maxval {maxval}, only 255 supported")
    # exactly one whitespace byte separates header from raster data
    start = end + 1
    raster = data[start : start + rows * cols]
    if len(raster) < rows * cols:
        raise TruncatedData(f"{path}: expected {rows * cols} pixels, got {len(raster)}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(rows, cols).copy()


def write_pgm(image: np.ndarray, path) -> None:
    """Write a (rows, cols) uint8 image; header is exactly P5\\n<cols> <rows>\\n255\\n."""
    img = np.asarray(image)
    if img.ndim != 2:
        raise MalformedHeader(f"expected 2-D image, got shape {img.shape}")
    rows, cols = img.shape
    header = f"P5\n{cols} {rows}\n255\n".encode("ascii")
    atomic_write_bytes(path, header + img.astype(np.uint8).tobytes())


def write_mask_pgm(mask: np.ndarray, path) -> None:
    """Write a {0,1} mask as a PGM with 0/255 values."""
    m = np.asarray(mask)
    write_pgm((m != 0).astype(np.uint8) * 255, path)


def read_mask_pgm(path) -> np.ndarray:
    """Read a PGM and binarize: any nonzero byte becomes 1."""
    return (read_pgm(path) != 0).astype(np.uint8)


def write_float_raster(values: np.ndarray, path) -> None:
    """Write an OCTF raster.

    Accepts (rows, cols) for a single channel or (channels, rows, cols);
    data is stored channel-major as little-endian float32.
    """
    arr = np.asarray(values, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[None, :, :]
    if arr.ndim != 3:
        raise IoFailure(f"expected 2-D or 3-D raster, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValue(f"raster for {path} contains non-finite values")
    channels, rows, cols = arr.shape
    header = OCTF_MAGIC + struct.pack("<4I", OCTF_VERSION, rows, cols, channels)
    atomic_write_bytes(path, header + arr.astype("<f4").tobytes())


def read_float_raster(path) -> np.ndarray:
    """Read an OCTF raster as a float32 array of (channels, rows, cols)."""
    data = Path(path).read_bytes()
    if len(data) < 4 or data[:4] != OCTF_MAGIC:
        raise BadMagic(f"{path}: not an OCTF raster")
    if len(data) < 20:
        raise TruncatedData(f"{path}: header truncated")
    version, rows, cols, channels = struct.unpack("<4I", data[4:20])
    if version != OCTF_VERSION:
        raise VersionMismatch(f"{path}: version {version}, expected {OCTF_VERSION}")
    count = rows * cols * channels
    raster = data[20 : 20 + 4 * count]
    if len(raster) < 4 * count:
        raise TruncatedData(f"{path}: expected {count} floats, got {len(raster) // 4}")
    return (
        np.frombuffer(raster, dtype="<f4")
        .reshape(channels, rows, cols)
        .astype(np.float32)
    )
