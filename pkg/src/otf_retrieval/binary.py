"""Binary sketches via random tight frames.

A feature vector v is centered, projected through a tall random frame U
(the first m columns of the orthogonal factor of a random n-by-n matrix,
so projection preserves lengths), and thresholded at zero into n bits:
bit j is 1 exactly when row j of U(v - mu) is positive. Codes are bit-packed
least-significant-bit first, padding bits zero.

Disk formats: ``OTFB`` stores only (m, n, seed); the frame is regenerated on
load, which keeps the file 20 bytes and the matrix bit-reproducible.
``OTFH`` stores packed codes, ceil(n/8) bytes per vector.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import numpy as np

from . import formats
from .errors import ConfigError, CorruptionError
from .store import FeatureStore


@dataclasses.dataclass(frozen=True)
class TightFrame:
    """Frozen (n, m) projection with unit-norm orthogonal columns."""

    matrix: np.ndarray  # (n, m) float64, read-only
    seed: int

    @property
    def input_dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def output_bits(self) -> int:
        return self.matrix.shape[0]

    @property
    def code_bytes(self) -> int:
        return (self.output_bits + 7) // 8


def make_tight_frame(input_dim: int, output_bits: int, seed: int = 0) -> TightFrame:
    """Build the frame from a QR factorization of a seeded Gaussian matrix.

    The orthogonal factor's sign ambiguity is pinned by forcing the diagonal
    of R non-negative, so a (dims, seed) triple always yields the same matrix.
    """
    if input_dim <= 0 or output_bits <= 0:
        raise ConfigError(f"dimensions must be positive, got ({input_dim}, {output_bits})")
    if output_bits < input_dim:
        raise ConfigError(
            f"output_bits ({output_bits}) must be at least input_dim ({input_dim}) "
            "for a length-preserving frame"
        )
    rng = np.random.default_rng(seed)
    square = rng.standard_normal((output_bits, output_bits))
    q, r = np.linalg.qr(square)
    signs = np.where(np.diag(r) < 0.0, -1.0, 1.0)
    q = q * signs[np.newaxis, :]
    matrix = np.ascontiguousarray(q[:, :input_dim])
    matrix.setflags(write=False)
    return TightFrame(matrix=matrix, seed=seed)


@dataclasses.dataclass(frozen=True)
class BinaryCodec:
    """A frame plus the centering vector it thresholds around."""

    frame: TightFrame
    centering: np.ndarray  # (input_dim,) float32

    def __post_init__(self):
        center = np.ascontiguousarray(self.centering, dtype=np.float32)
        if center.shape != (self.frame.input_dim,):
            raise ConfigError(
                f"centering shape {center.shape} does not match frame input dim {self.frame.input_dim}"
            )
        center.setflags(write=False)
        object.__setattr__(self, "centering", center)


def binarize(codec: BinaryCodec, vectors: np.ndarray, chunk_rows: int = 1 << 14) -> np.ndarray:
    """Encode vectors to packed bit codes of shape (rows, ceil(n/8)).

    A single (m,) vector comes back as one (ceil(n/8),) row. Projection runs
    in float64; a projected coordinate of exactly zero maps to bit 0.
    """
    arr = np.asarray(vectors, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[np.newaxis, :]
    if arr.shape[1] != codec.frame.input_dim:
        raise ConfigError(
            f"vector dim {arr.shape[1]} does not match frame input dim {codec.frame.input_dim}"
        )
    out = np.empty((arr.shape[0], codec.frame.code_bytes), dtype=np.uint8)
    center = codec.centering.astype(np.float64)
    for start in range(0, arr.shape[0], chunk_rows):
        stop = min(start + chunk_rows, arr.shape[0])
        projected = (arr[start:stop] - center) @ codec.frame.matrix.T
        bits = projected > 0.0
        out[start:stop] = np.packbits(bits, axis=1, bitorder="little")
    return out[0] if single else out


def unpack_bits(codes: np.ndarray, output_bits: int) -> np.ndarray:
    """Expand packed codes to a float32 {0, 1} matrix of shape (rows, output_bits)."""
    arr = np.asarray(codes, dtype=np.uint8)
    single = arr.ndim == 1
    if single:
        arr = arr[np.newaxis, :]
    expected = (output_bits + 7) // 8
    if arr.shape[1] != expected:
        raise ConfigError(f"code width {arr.shape[1]} does not match {expected} bytes for {output_bits} bits")
    bits = np.unpackbits(arr, axis=1, count=output_bits, bitorder="little").astype(np.float32)
    return bits[0] if single else bits


def hamming_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise Hamming distance between packed codes of equal width."""
    xa = np.asarray(a, dtype=np.uint8)
    xb = np.asarray(b, dtype=np.uint8)
    diff = np.bitwise_xor(xa, xb)
    return np.bitwise_count(diff).sum(axis=-1).astype(np.int64)


def _padding_mask(output_bits: int) -> int:
    """Bit mask of the unused high bits in the final code byte (0 if none)."""
    rem = output_bits % 8
    return 0 if rem == 0 else (0xFF << rem) & 0xFF


def validate_padding(codes: np.ndarray, output_bits: int) -> None:
    mask = _padding_mask(output_bits)
    if mask and codes.size and int(np.bitwise_and(codes[..., -1], mask).max()) != 0:
        raise CorruptionError("nonzero padding bits in final code byte")


# -- disk formats ------------------------------------------------------------

def write_frame(frame: TightFrame, path: str | Path) -> None:
    with open(path, "wb") as fh:
        formats.write_magic(fh, formats.MAGIC_FRAME)
        formats.write_u32(fh, frame.input_dim)
        formats.write_u32(fh, frame.output_bits)
        formats.write_u64(fh, frame.seed)


def load_frame(path: str | Path) -> TightFrame:
    path = Path(path)
    with open(path, "rb") as fh:
        formats.check_magic(fh, formats.MAGIC_FRAME)
        input_dim = formats.read_u32(fh, "input_dim")
        output_bits = formats.read_u32(fh, "output_bits")
        seed = formats.read_u64(fh, "seed")
        formats.expect_eof(fh, str(path))
    return make_tight_frame(input_dim, output_bits, seed)


def write_binary_codes(codes: np.ndarray, output_bits: int, path: str | Path) -> None:
    arr = np.ascontiguousarray(codes, dtype=np.uint8)
    if arr.ndim != 2 or arr.shape[1] != (output_bits + 7) // 8:
        raise ConfigError(f"codes shape {arr.shape} does not match {output_bits} bits")
    validate_padding(arr, output_bits)
    with open(path, "wb") as fh:
        formats.write_magic(fh, formats.MAGIC_BINARY_CODES)
        formats.write_u64(fh, arr.shape[0])
        formats.write_u32(fh, output_bits)
        fh.write(arr.tobytes())


def load_binary_codes(path: str | Path) -> tuple[np.ndarray, int]:
    """Load packed codes; returns (codes, output_bits)."""
    path = Path(path)
    with open(path, "rb") as fh:
        formats.check_magic(fh, formats.MAGIC_BINARY_CODES)
        count = formats.read_u64(fh, "count")
        output_bits = formats.read_u32(fh, "output_bits")
        row_bytes = (output_bits + 7) // 8
        codes = formats.read_bytes_array(fh, count, row_bytes, "code payload")
        formats.expect_eof(fh, str(path))
    validate_padding(codes, output_bits)
    return codes, output_bits


def binarize_store(codec: BinaryCodec, store: FeatureStore) -> np.ndarray:
    """Convenience wrapper: packed codes for every row of a store."""
    return binarize(codec, store.data)
