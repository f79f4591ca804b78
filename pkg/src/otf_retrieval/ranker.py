"""Scoring and ranked selection over dense, quantized, and binary repositories.

Scores are inner products with the model. Dense stores score through a
float32 matrix product; quantized stores through a per-block lookup table
without decompression; binary stores by unpacking bits to {0, 1} features in
chunks. Selection semantics are fixed everywhere: descending score, ties
broken by ascending id, exactly what a full stable sort would produce.
"""

from __future__ import annotations

import dataclasses
from typing import Iterator

import numpy as np

from . import pq as pq_mod
from .binary import BinaryCodec, binarize, unpack_bits
from .errors import ConfigError
from .model import LinearModel
from .pq import PQCodebook
from .store import FeatureStore

DEFAULT_LIST_SIZE = 100
DEFAULT_RANK_INTERVAL = 0.18


@dataclasses.dataclass(frozen=True)
class RankerConfig:
    """Ranking cadence and list size for live sessions."""

    k: int = DEFAULT_LIST_SIZE
    interval: float = DEFAULT_RANK_INTERVAL

    def validate(self) -> None:
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.interval <= 0:
            raise ConfigError(f"interval must be positive, got {self.interval}")


@dataclasses.dataclass(frozen=True)
class RankedList:
    """An ordered result page: parallel id/score arrays plus provenance."""

    ids: np.ndarray
    scores: np.ndarray
    model_version: int
    produced_at: float
    names: tuple[str, ...] | None = None

    def __len__(self) -> int:
        return len(self.ids)

    def entries(self) -> Iterator[tuple[int, float]]:
        return zip((int(i) for i in self.ids), (float(s) for s in self.scores))


def _as_weights(model: LinearModel | np.ndarray) -> np.ndarray:
    return model.weights if isinstance(model, LinearModel) else np.asarray(model)


def score_dense(model: LinearModel | np.ndarray, store: FeatureStore | np.ndarray) -> np.ndarray:
    """Inner products against raw float32 vectors; float32 accumulation."""
    data = store.data if isinstance(store, FeatureStore) else np.asarray(store, dtype=np.float32)
    w = _as_weights(model)
    if data.shape[1] != w.shape[0]:
        raise ConfigError(f"store dim {data.shape[1]} does not match model dim {w.shape[0]}")
    return data @ w.astype(np.float32)


def score_pq(model: LinearModel | np.ndarray, codebook: PQCodebook, codes: np.ndarray) -> np.ndarray:
    """LUT scoring of quantized vectors; equals scoring the decoded store."""
    lut = pq_mod.build_score_lut(_as_weights(model), codebook)
    return pq_mod.score_codes(lut, codes)


def score_binary(
    model: LinearModel | np.ndarray,
    codes: np.ndarray,
    output_bits: int,
    chunk_rows: int = 1 << 14,
) -> np.ndarray:
    """Score packed binary codes: sum of model weights at set bit positions."""
    w = _as_weights(model)
    if w.shape[0] != output_bits:
        raise ConfigError(f"model dim {w.shape[0]} does not match {output_bits} code bits")
    arr = np.asarray(codes, dtype=np.uint8)
    w32 = w.astype(np.float32)
    out = np.empty(arr.shape[0], dtype=np.float32)
    for start in range(0, arr.shape[0], chunk_rows):
        stop = min(start + chunk_rows, arr.shape[0])
        out[start:stop] = unpack_bits(arr[start:stop], output_bits) @ w32
    return out


def top_k(
    scores: np.ndarray,
    k: int,
    ids: np.ndarray | None = None,
    names: list[str] | None = None,
    model_version: int = 0,
    produced_at: float = 0.0,
) -> RankedList:
    """Select the k best entries: descending score, ties by ascending id.

    Equivalent to fully sorting by (-score, id) and truncating; boundary ties
    are resolved toward the smallest ids so the result is deterministic.
    """
    scores = np.asarray(scores)
    n = scores.shape[0]
    if ids is None:
        ids = np.arange(n, dtype=np.int64)
    else:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.shape != (n,):
            raise ConfigError(f"ids shape {ids.shape} does not match {n} scores")
    k_eff = max(0, min(k, n))
    if k_eff == 0:
        empty = np.empty(0, dtype=np.int64)
        return RankedList(empty, np.empty(0, dtype=np.float64), model_version, produced_at,
                          tuple() if names is not None else None)
    if k_eff == n:
        chosen = np.arange(n)
    else:
        threshold = np.partition(scores, n - k_eff)[n - k_eff]
        above = np.flatnonzero(scores > threshold)
        boundary = np.flatnonzero(scores == threshold)
        need = k_eff - above.size
        if need < boundary.size:
            by_id = boundary[np.argsort(ids[boundary], kind="stable")]
            boundary = by_id[:need]
        chosen = np.concatenate([above, boundary])
    order = np.lexsort((ids[chosen], -scores[chosen].astype(np.float64)))
    chosen = chosen[order]
    out_names = tuple(names[i] for i in chosen) if names is not None else None
    return RankedList(
        ids[chosen].copy(),
        scores[chosen].astype(np.float64),
        model_version,
        produced_at,
        out_names,
    )


class Repository:
    """A scoring-ready repository in one of the three representations.

    Bundles the payload (raw vectors, byte codes, or packed bits) with row
    ids and display names, and adapts incoming dense training vectors to
    whatever space the model for this representation lives in.
    """

    def __init__(
        self,
        kind: str,
        payload: np.ndarray,
        model_dim: int,
        ids: np.ndarray,
        names: list[str] | None,
        codebook: PQCodebook | None = None,
        codec: BinaryCodec | None = None,
        output_bits: int | None = None,
    ):
        self.kind = kind
        self._payload = payload
        self._model_dim = model_dim
        self.ids = np.asarray(ids, dtype=np.int64)
        self.names = list(names) if names is not None else None
        self._codebook = codebook
        self._codec = codec
        self._output_bits = output_bits

    # -- constructors --------------------------------------------------------

    @classmethod
    def dense(cls, store: FeatureStore) -> "Repository":
        return cls("dense", store.data, store.dim, store.ids, store.names)

    @classmethod
    def quantized(
        cls,
        codebook: PQCodebook,
        codes: np.ndarray,
        ids: np.ndarray | None = None,
        names: list[str] | None = None,
    ) -> "Repository":
        codes = np.asarray(codes, dtype=np.uint8)
        if codes.ndim != 2 or codes.shape[1] != codebook.num_blocks:
            raise ConfigError(f"codes shape {codes.shape} does not match {codebook.num_blocks} blocks")
        if ids is None:
            ids = np.arange(codes.shape[0], dtype=np.int64)
        return cls("pq", codes, codebook.dim, ids, names, codebook=codebook)

    @classmethod
    def binary(
        cls,
        codec: BinaryCodec,
        codes: np.ndarray,
        ids: np.ndarray | None = None,
        names: list[str] | None = None,
    ) -> "Repository":
        codes = np.asarray(codes, dtype=np.uint8)
        bits = codec.frame.output_bits
        if codes.ndim != 2 or codes.shape[1] != codec.frame.code_bytes:
            raise ConfigError(f"codes shape {codes.shape} does not match {bits} bits")
        if ids is None:
            ids = np.arange(codes.shape[0], dtype=np.int64)
        return cls("binary", codes, bits, ids, names, codec=codec, output_bits=bits)

    # -- views ---------------------------------------------------------------

    @property
    def count(self) -> int:
        return self._payload.shape[0]

    @property
    def model_dim(self) -> int:
        """Dimensionality the ranking model must have for this representation."""
        return self._model_dim

    @property
    def feature_dim(self) -> int:
        """Dimensionality of the raw vectors this repository was built from."""
        if self.kind == "binary":
            assert self._codec is not None
            return self._codec.frame.input_dim
        return self._model_dim

    def payload_bytes(self) -> int:
        return int(self._payload.nbytes)

    def score(self, model: LinearModel | np.ndarray) -> np.ndarray:
        if self.kind == "dense":
            return score_dense(model, self._payload)
        if self.kind == "pq":
            assert self._codebook is not None
            return score_pq(model, self._codebook, self._payload)
        assert self._codec is not None and self._output_bits is not None
        return score_binary(model, self._payload, self._output_bits)

    def adapt_training_vectors(self, vectors: np.ndarray) -> np.ndarray:
        """Map raw dense vectors into the space the model is trained in.

        Dense and quantized repositories train on the raw vectors; a binary
        repository trains on the same {0, 1} bit features it stores.
        """
        arr = np.asarray(vectors, dtype=np.float32)
        if self.kind != "binary":
            return arr
        assert self._codec is not None and self._output_bits is not None
        return unpack_bits(binarize(self._codec, arr), self._output_bits)

    def without_ids(self, excluded) -> "Repository":
        """Repository minus the rows whose ids are excluded; ids preserved."""
        drop = frozenset(int(i) for i in excluded)
        if not drop:
            return self
        keep = np.array([i for i, v in enumerate(self.ids) if int(v) not in drop], dtype=np.int64)
        names = [self.names[i] for i in keep] if self.names is not None else None
        return Repository(
            self.kind,
            self._payload[keep],
            self._model_dim,
            self.ids[keep],
            names,
            codebook=self._codebook,
            codec=self._codec,
            output_bits=self._output_bits,
        )

    def rank(self, model: LinearModel, k: int, produced_at: float = 0.0) -> RankedList:
        """Score everything and select the top k under this model."""
        return top_k(
            self.score(model),
            k,
            ids=self.ids,
            names=self.names,
            model_version=model.version,
            produced_at=produced_at,
        )
