"""Low-level helpers for the on-disk binary formats.

All formats share the same skeleton: a 4-byte ASCII magic, a little-endian
u32 format version, then format-specific header fields and a payload.
Numeric payloads are little-endian binary32 unless stated otherwise.
"""

from __future__ import annotations

import struct
from typing import BinaryIO

import numpy as np

from .errors import CorruptionError, FormatError

FORMAT_VERSION = 1

MAGIC_FEATURES = b"OTFR"
MAGIC_CODEBOOK = b"OTFQ"
MAGIC_FRAME = b"OTFB"
MAGIC_PQ_CODES = b"OTFC"
MAGIC_BINARY_CODES = b"OTFH"
MAGIC_MODEL = b"OTFM"


def read_exact(fh: BinaryIO, n: int, what: str) -> bytes:
    """Read exactly n bytes or raise CorruptionError naming the missing piece."""
    buf = fh.read(n)
    if len(buf) != n:
        raise CorruptionError(f"truncated file: expected {n} bytes of {what}, got {len(buf)}")
    return buf


def write_magic(fh: BinaryIO, magic: bytes) -> None:
    fh.write(magic)
    fh.write(struct.pack("<I", FORMAT_VERSION))


def check_magic(fh: BinaryIO, magic: bytes) -> None:
    """Validate the 4-byte magic and the u32 version that follows it."""
    got = read_exact(fh, 4, "magic")
    if got != magic:
        raise FormatError(f"bad magic {got!r}, expected {magic!r}")
    version = read_u32(fh, "format version")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}, expected {FORMAT_VERSION}")


def read_u32(fh: BinaryIO, what: str) -> int:
    return struct.unpack("<I", read_exact(fh, 4, what))[0]


def read_u64(fh: BinaryIO, what: str) -> int:
    return struct.unpack("<Q", read_exact(fh, 8, what))[0]


def write_u32(fh: BinaryIO, value: int) -> None:
    fh.write(struct.pack("<I", value))


def write_u64(fh: BinaryIO, value: int) -> None:
    fh.write(struct.pack("<Q", value))


def read_f32(fh: BinaryIO, count: int, what: str) -> np.ndarray:
    """Read count little-endian binary32 values as a flat float32 array."""
    buf = read_exact(fh, 4 * count, what)
    return np.frombuffer(buf, dtype="<f4").astype(np.float32, copy=True)


def write_f32(fh: BinaryIO, values: np.ndarray) -> None:
    fh.write(np.ascontiguousarray(values, dtype="<f4").tobytes())


def read_bytes_array(fh: BinaryIO, rows: int, cols: int, what: str) -> np.ndarray:
    buf = read_exact(fh, rows * cols, what)
    return np.frombuffer(buf, dtype=np.uint8).reshape(rows, cols).copy()


def expect_eof(fh: BinaryIO, path: str) -> None:
    """Raise if trailing bytes follow the payload; formats are fixed-size."""
    extra = fh.read(1)
    if extra:
        raise CorruptionError(f"{path}: trailing bytes after payload")
