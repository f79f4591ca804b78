"""Product quantization: per-block k-means codebooks, byte codes, LUT scoring.

A d-dimensional vector is split into M = d/subdim contiguous sub-blocks and
each block is replaced by the index of its nearest codebook centroid, giving
an M-byte code. Scoring against a linear model never decompresses: a lookup
table of partial inner products turns each code into M table reads and a sum.

Disk formats: ``OTFQ`` holds a codebook (centroids block-major, then the
component-wise mean of the training set, used downstream for centering);
``OTFC`` holds packed codes, one row of M bytes per vector.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import numpy as np

from . import formats
from .errors import ConfigError, CorruptionError, InsufficientDataError
from .store import FeatureStore

DEFAULT_NUM_CENTROIDS = 256
DEFAULT_ITERATIONS = 25


@dataclasses.dataclass(frozen=True)
class PQConfig:
    """Codebook learning knobs.

    subdim is the number of dimensions per sub-block (the model dimension must
    divide evenly). num_centroids must fit a byte. iterations bounds the Lloyd
    loop; it stops early once assignments are stable.
    """

    subdim: int
    num_centroids: int = DEFAULT_NUM_CENTROIDS
    iterations: int = DEFAULT_ITERATIONS
    seed: int = 0

    def validate(self) -> None:
        if self.subdim <= 0:
            raise ConfigError(f"subdim must be positive, got {self.subdim}")
        if not 1 <= self.num_centroids <= 256:
            raise ConfigError(f"num_centroids must be in [1, 256], got {self.num_centroids}")
        if self.iterations < 0:
            raise ConfigError(f"iterations must be >= 0, got {self.iterations}")


class PQCodebook:
    """Learned per-block centroids plus the training-set mean.

    centroids has shape (num_blocks, num_centroids, subdim) float32.
    centering is the component-wise float32 mean of the training vectors;
    quantization itself does not use it, but downstream consumers (binary
    sketching, diagnostics) read it from the same artifact.
    """

    def __init__(self, centroids: np.ndarray, centering: np.ndarray):
        cents = np.ascontiguousarray(centroids, dtype=np.float32)
        if cents.ndim != 3:
            raise ConfigError(f"centroids must be (blocks, centroids, subdim), got {cents.shape}")
        center = np.ascontiguousarray(centering, dtype=np.float32)
        if center.shape != (cents.shape[0] * cents.shape[2],):
            raise ConfigError(
                f"centering length {center.shape} does not match dim {cents.shape[0] * cents.shape[2]}"
            )
        cents.setflags(write=False)
        center.setflags(write=False)
        self._centroids = cents
        self._centering = center
        self.objective_history: list[list[float]] = []

    @property
    def centroids(self) -> np.ndarray:
        return self._centroids

    @property
    def centering(self) -> np.ndarray:
        return self._centering

    @property
    def num_blocks(self) -> int:
        return self._centroids.shape[0]

    @property
    def num_centroids(self) -> int:
        return self._centroids.shape[1]

    @property
    def subdim(self) -> int:
        return self._centroids.shape[2]

    @property
    def dim(self) -> int:
        return self.num_blocks * self.subdim


def _assign(block: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest centroid per row (ties to the lowest index) and the distances.

    Returns (assignment, sqdist_of_assignment), both length len(block).
    Arithmetic is float64 so near-ties resolve the same way everywhere.
    """
    sq = (
        np.sum(block * block, axis=1)[:, np.newaxis]
        - 2.0 * block @ centroids.T
        + np.sum(centroids * centroids, axis=1)[np.newaxis, :]
    )
    assign = np.argmin(sq, axis=1)
    best = np.maximum(sq[np.arange(len(block)), assign], 0.0)
    return assign, best


def _lloyd(
    block: np.ndarray,
    k: int,
    iterations: int,
    rng: np.random.Generator,
    init: np.ndarray | None = None,
) -> tuple[np.ndarray, list[float]]:
    """Plain Lloyd iterations on one sub-block, float64 throughout.

    Initial centroids are k distinct training rows sampled with the given rng
    (or an explicit init). A cluster that loses all members is re-seeded at
    the farthest member of the currently largest cluster, which keeps the
    recorded objective non-increasing.
    """
    data = np.asarray(block, dtype=np.float64)
    if init is None:
        unique_rows = np.unique(data, axis=0)
        if unique_rows.shape[0] < k:
            raise InsufficientDataError(
                f"need at least {k} distinct sub-vectors, found {unique_rows.shape[0]}"
            )
        pick = rng.choice(unique_rows.shape[0], size=k, replace=False)
        centroids = unique_rows[pick].copy()
    else:
        centroids = np.asarray(init, dtype=np.float64).copy()
        if centroids.shape != (k, data.shape[1]):
            raise ConfigError(f"init shape {centroids.shape} does not match (k, subdim)")

    history: list[float] = []
    prev_assign: np.ndarray | None = None
    plain_update = True
    for _ in range(iterations):
        assign, dists = _assign(data, centroids)
        history.append(float(dists.sum()))
        if prev_assign is not None and plain_update and np.array_equal(assign, prev_assign):
            break
        prev_assign = assign
        counts = np.bincount(assign, minlength=k)
        empties = np.flatnonzero(counts == 0)
        # A re-seed rewrites part of the assignment, so a stable-looking
        # assignment right after one does not mean the means are final.
        plain_update = empties.size == 0
        for j in range(k):
            if counts[j] > 0:
                centroids[j] = data[assign == j].mean(axis=0)
        for j in empties:
            largest = int(np.argmax(counts))
            members = np.flatnonzero(assign == largest)
            gaps = np.sum((data[members] - centroids[largest]) ** 2, axis=1)
            stolen = members[int(np.argmax(gaps))]
            centroids[j] = data[stolen]
            assign[stolen] = j
            counts[largest] -= 1
            counts[j] += 1
    return centroids, history


def learn_pq_codebook(train: FeatureStore | np.ndarray, cfg: PQConfig) -> PQCodebook:
    """Learn one k-means codebook per sub-block of the training vectors.

    Deterministic for a fixed config: blocks are processed in order against a
    single seeded generator. Needs at least num_centroids distinct sub-vectors
    in every block.
    """
    cfg.validate()
    data = train.data if isinstance(train, FeatureStore) else np.asarray(train, dtype=np.float32)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ConfigError("training data must be a non-empty 2-D array")
    dim = data.shape[1]
    if dim % cfg.subdim != 0:
        raise ConfigError(f"dim {dim} is not divisible by subdim {cfg.subdim}")
    if data.shape[0] < cfg.num_centroids:
        raise InsufficientDataError(
            f"{data.shape[0]} training vectors for {cfg.num_centroids} centroids"
        )
    rng = np.random.default_rng(cfg.seed)
    blocks = dim // cfg.subdim
    centroids = np.empty((blocks, cfg.num_centroids, cfg.subdim), dtype=np.float32)
    histories: list[list[float]] = []
    for m in range(blocks):
        sub = data[:, m * cfg.subdim : (m + 1) * cfg.subdim]
        cents, history = _lloyd(sub, cfg.num_centroids, cfg.iterations, rng)
        centroids[m] = cents.astype(np.float32)
        histories.append(history)
    centering = data.astype(np.float64).mean(axis=0).astype(np.float32)
    book = PQCodebook(centroids, centering)
    book.objective_history = histories
    return book


def pq_encode(codebook: PQCodebook, vectors: np.ndarray, chunk_rows: int = 1 << 18) -> np.ndarray:
    """Quantize vectors to (n, num_blocks) uint8 codes, nearest centroid per block.

    Accepts a single (dim,) vector and returns a (num_blocks,) code for it.
    Large inputs are processed in row chunks to bound temporary memory.
    """
    arr = np.asarray(vectors, dtype=np.float32)
    single = arr.ndim == 1
    if single:
        arr = arr[np.newaxis, :]
    if arr.shape[1] != codebook.dim:
        raise ConfigError(f"vector dim {arr.shape[1]} does not match codebook dim {codebook.dim}")
    n = arr.shape[0]
    codes = np.empty((n, codebook.num_blocks), dtype=np.uint8)
    cents64 = codebook.centroids.astype(np.float64)
    cent_norms = np.sum(cents64 * cents64, axis=2)
    for start in range(0, n, chunk_rows):
        stop = min(start + chunk_rows, n)
        chunk = arr[start:stop].astype(np.float64)
        for m in range(codebook.num_blocks):
            sub = chunk[:, m * codebook.subdim : (m + 1) * codebook.subdim]
            scores = sub @ cents64[m].T
            sq = cent_norms[m][np.newaxis, :] - 2.0 * scores
            codes[start:stop, m] = np.argmin(sq, axis=1).astype(np.uint8)
    return codes[0] if single else codes


def pq_decode(codebook: PQCodebook, codes: np.ndarray) -> np.ndarray:
    """Reconstruct float32 vectors by concatenating the coded centroids."""
    arr = np.asarray(codes, dtype=np.uint8)
    single = arr.ndim == 1
    if single:
        arr = arr[np.newaxis, :]
    if arr.shape[1] != codebook.num_blocks:
        raise ConfigError(f"code width {arr.shape[1]} does not match {codebook.num_blocks} blocks")
    if arr.size and int(arr.max()) >= codebook.num_centroids:
        raise CorruptionError(f"code {int(arr.max())} out of range for {codebook.num_centroids} centroids")
    parts = [codebook.centroids[m][arr[:, m]] for m in range(codebook.num_blocks)]
    out = np.concatenate(parts, axis=1)
    return out[0] if single else out


def build_score_lut(weights: np.ndarray, codebook: PQCodebook) -> np.ndarray:
    """Partial inner products of the model against every centroid.

    Returns a (num_blocks, num_centroids) float64 table: entry [m, j] is the
    inner product of weight sub-block m with centroid j of block m. Summing
    one entry per block reproduces the inner product with the decoded vector.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (codebook.dim,):
        raise ConfigError(f"weights shape {w.shape} does not match codebook dim {codebook.dim}")
    w_blocks = w.reshape(codebook.num_blocks, codebook.subdim)
    return np.einsum("mkq,mq->mk", codebook.centroids.astype(np.float64), w_blocks)


def score_codes(lut: np.ndarray, codes: np.ndarray, chunk_rows: int = 1 << 18) -> np.ndarray:
    """Score coded vectors against a LUT: one table read per block, summed in float64."""
    arr = np.asarray(codes, dtype=np.uint8)
    single = arr.ndim == 1
    if single:
        arr = arr[np.newaxis, :]
    blocks = lut.shape[0]
    if arr.shape[1] != blocks:
        raise ConfigError(f"code width {arr.shape[1]} does not match LUT with {blocks} blocks")
    out = np.empty(arr.shape[0], dtype=np.float64)
    cols = np.arange(blocks)
    for start in range(0, arr.shape[0], chunk_rows):
        stop = min(start + chunk_rows, arr.shape[0])
        out[start:stop] = lut[cols, arr[start:stop]].sum(axis=1)
    return out[0] if single else out


# -- disk formats ------------------------------------------------------------

def write_codebook(codebook: PQCodebook, path: str | Path) -> None:
    with open(path, "wb") as fh:
        formats.write_magic(fh, formats.MAGIC_CODEBOOK)
        formats.write_u32(fh, codebook.dim)
        formats.write_u32(fh, codebook.subdim)
        formats.write_u32(fh, codebook.num_centroids)
        formats.write_f32(fh, codebook.centroids)
        formats.write_f32(fh, codebook.centering)


def load_codebook(path: str | Path) -> PQCodebook:
    path = Path(path)
    with open(path, "rb") as fh:
        formats.check_magic(fh, formats.MAGIC_CODEBOOK)
        dim = formats.read_u32(fh, "dim")
        subdim = formats.read_u32(fh, "subdim")
        k = formats.read_u32(fh, "num_centroids")
        if subdim == 0 or dim == 0 or dim % subdim != 0:
            raise CorruptionError(f"{path}: dim {dim} not divisible by subdim {subdim}")
        blocks = dim // subdim
        cents = formats.read_f32(fh, blocks * k * subdim, "centroids").reshape(blocks, k, subdim)
        centering = formats.read_f32(fh, dim, "centering vector")
        formats.expect_eof(fh, str(path))
    return PQCodebook(cents, centering)


def write_pq_codes(codes: np.ndarray, path: str | Path) -> None:
    arr = np.ascontiguousarray(codes, dtype=np.uint8)
    if arr.ndim != 2:
        raise ConfigError(f"codes must be 2-D, got shape {arr.shape}")
    with open(path, "wb") as fh:
        formats.write_magic(fh, formats.MAGIC_PQ_CODES)
        formats.write_u64(fh, arr.shape[0])
        formats.write_u32(fh, arr.shape[1])
        fh.write(arr.tobytes())


def load_pq_codes(path: str | Path, num_centroids: int | None = None) -> np.ndarray:
    path = Path(path)
    with open(path, "rb") as fh:
        formats.check_magic(fh, formats.MAGIC_PQ_CODES)
        count = formats.read_u64(fh, "count")
        blocks = formats.read_u32(fh, "num_blocks")
        codes = formats.read_bytes_array(fh, count, blocks, "code payload")
        formats.expect_eof(fh, str(path))
    if num_centroids is not None and codes.size and int(codes.max()) >= num_centroids:
        raise CorruptionError(
            f"{path}: code value {int(codes.max())} out of range for {num_centroids} centroids"
        )
    return codes
