"""Feature repositories: immutable in-memory stores, disk format, synthetic corpora.

A FeatureStore is a read-only (count, dim) float32 matrix plus stable integer
ids. Rows are the unit the rest of the package scores and ranks; ids are what
results and exclusion lists refer to, so subsetting preserves them.

The disk format (magic ``OTFR``) is little-endian: magic, u32 version, u32
dim, u64 count, then count*dim binary32 values row-major. Two optional text
sidecars ride along: a name file whose line k is the display name of row k,
and a label file of ``<class-name>\\t<row-id>`` lines.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from . import formats
from .errors import (
    ConfigError,
    CorruptionError,
    DegenerateInputError,
    EmptyStoreError,
)

_NORM_TOLERANCE = 1e-6


def normalize_rows(data: np.ndarray) -> np.ndarray:
    """L2-normalize each row, returning float32.

    Norms are computed in float64 before the division so that low-precision
    inputs still land within 1e-6 of unit length. Rows with zero norm have no
    direction to keep and are rejected.

    Raises:
        DegenerateInputError: if any row has zero L2 norm.
    """
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[np.newaxis, :]
        squeeze = True
    else:
        squeeze = False
    norms = np.linalg.norm(arr, axis=1)
    if np.any(norms == 0.0):
        bad = int(np.flatnonzero(norms == 0.0)[0])
        raise DegenerateInputError(f"row {bad} has zero norm and cannot be normalized")
    out = (arr / norms[:, np.newaxis]).astype(np.float32)
    return out[0] if squeeze else out


class FeatureStore:
    """Immutable feature matrix with per-row integer ids and optional names."""

    def __init__(
        self,
        data: np.ndarray,
        ids: np.ndarray | None = None,
        names: list[str] | None = None,
    ):
        arr = np.ascontiguousarray(data, dtype=np.float32)
        if arr.ndim != 2:
            raise ConfigError(f"feature data must be 2-D, got shape {arr.shape}")
        if arr.shape[0] == 0 or arr.shape[1] == 0:
            raise EmptyStoreError(f"feature store needs at least one row and one column, got shape {arr.shape}")
        arr.setflags(write=False)
        self._data = arr

        if ids is None:
            id_arr = np.arange(arr.shape[0], dtype=np.int64)
        else:
            id_arr = np.ascontiguousarray(ids, dtype=np.int64)
            if id_arr.shape != (arr.shape[0],):
                raise ConfigError(f"ids shape {id_arr.shape} does not match {arr.shape[0]} rows")
            if np.any(id_arr < 0):
                raise ConfigError("ids must be non-negative")
            if np.unique(id_arr).size != id_arr.size:
                raise ConfigError("ids must be unique")
        id_arr.setflags(write=False)
        self._ids = id_arr

        if names is not None and len(names) != arr.shape[0]:
            raise ConfigError(f"names list has {len(names)} entries for {arr.shape[0]} rows")
        self._names = list(names) if names is not None else None
        self._id_to_row: dict[int, int] | None = None

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def ids(self) -> np.ndarray:
        return self._ids

    @property
    def names(self) -> list[str] | None:
        return list(self._names) if self._names is not None else None

    @property
    def count(self) -> int:
        return self._data.shape[0]

    @property
    def dim(self) -> int:
        return self._data.shape[1]

    def name_of(self, row: int) -> str | None:
        return self._names[row] if self._names is not None else None

    def row_of_id(self, ident: int) -> int:
        if self._id_to_row is None:
            self._id_to_row = {int(v): i for i, v in enumerate(self._ids)}
        try:
            return self._id_to_row[int(ident)]
        except KeyError:
            raise KeyError(f"id {ident} not present in store") from None

    def subset(self, rows: np.ndarray) -> "FeatureStore":
        """New store holding the given row positions, ids and names preserved."""
        rows = np.asarray(rows)
        names = [self._names[i] for i in rows] if self._names is not None else None
        return FeatureStore(self._data[rows], self._ids[rows], names)

    def without_ids(self, excluded: Iterable[int]) -> "FeatureStore":
        """New store with every row whose id is in ``excluded`` removed."""
        drop = frozenset(int(i) for i in excluded)
        if not drop:
            return self
        keep = np.array([i for i, v in enumerate(self._ids) if int(v) not in drop], dtype=np.int64)
        if keep.size == 0:
            raise EmptyStoreError("exclusion removed every row")
        return self.subset(keep)


def load_features(path: str | Path, normalize: bool = True) -> FeatureStore:
    """Load an ``OTFR`` feature file.

    Rows are L2-normalized on the way in unless ``normalize`` is False; pass
    False when byte-faithful round-trips matter more than unit length.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        formats.check_magic(fh, formats.MAGIC_FEATURES)
        dim = formats.read_u32(fh, "dim")
        count = formats.read_u64(fh, "count")
        if dim == 0 or count == 0:
            raise EmptyStoreError(f"{path}: empty store (count={count}, dim={dim})")
        flat = formats.read_f32(fh, count * dim, "feature payload")
        formats.expect_eof(fh, str(path))
    data = flat.reshape(count, dim)
    if normalize:
        data = normalize_rows(data)
    names = None
    names_path = _names_sidecar(path)
    if names_path.exists():
        names = load_names(names_path)
        if len(names) != count:
            raise CorruptionError(f"{names_path}: {len(names)} names for {count} rows")
    return FeatureStore(data, names=names)


def write_features(store: FeatureStore, path: str | Path) -> None:
    """Write a store to an ``OTFR`` file (names sidecar included when present)."""
    path = Path(path)
    with open(path, "wb") as fh:
        formats.write_magic(fh, formats.MAGIC_FEATURES)
        formats.write_u32(fh, store.dim)
        formats.write_u64(fh, store.count)
        formats.write_f32(fh, store.data)
    if store.names is not None:
        write_names(store.names, _names_sidecar(path))


def _names_sidecar(path: Path) -> Path:
    return path.with_suffix(path.suffix + ".names")


def load_names(path: str | Path) -> list[str]:
    text = Path(path).read_text(encoding="utf-8")
    return text.splitlines()


def write_names(names: list[str], path: str | Path) -> None:
    Path(path).write_text("".join(f"{n}\n" for n in names), encoding="utf-8")


@dataclasses.dataclass(frozen=True)
class LabelSet:
    """Ground-truth class membership: class name to the set of member row ids."""

    classes: Mapping[str, frozenset[int]]

    def ids_for(self, name: str) -> frozenset[int]:
        try:
            return self.classes[name]
        except KeyError:
            raise KeyError(f"unknown class {name!r}") from None

    def class_names(self) -> list[str]:
        return sorted(self.classes)

    def validate_against(self, store: FeatureStore) -> None:
        known = set(int(i) for i in store.ids)
        for name, members in self.classes.items():
            stray = set(members) - known
            if stray:
                raise CorruptionError(f"label class {name!r} references unknown ids {sorted(stray)[:5]}")


def load_labels(path: str | Path, store: FeatureStore | None = None) -> LabelSet:
    """Parse a ``<class-name>\\t<row-id>`` label sidecar."""
    classes: dict[str, set[int]] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            name, raw_id = line.split("\t")
            ident = int(raw_id)
        except ValueError:
            raise CorruptionError(f"{path}:{lineno}: expected '<class>\\t<id>', got {line!r}") from None
        classes.setdefault(name, set()).add(ident)
    labels = LabelSet({k: frozenset(v) for k, v in classes.items()})
    if store is not None:
        labels.validate_against(store)
    return labels


def write_labels(labels: LabelSet, path: str | Path) -> None:
    lines = []
    for name in sorted(labels.classes):
        for ident in sorted(labels.classes[name]):
            lines.append(f"{name}\t{ident}\n")
    Path(path).write_text("".join(lines), encoding="utf-8")


# -- synthetic corpora -------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class SynthConfig:
    """Shape of a synthetic labeled corpus.

    Classes are isotropic Gaussian clusters: each class center is drawn with
    scale ``center_spread``, members scatter around it with scale
    ``cluster_spread``, and distractors come from the same background
    distribution as the centers. Everything is L2-normalized.
    """

    dim: int
    classes: int
    per_class: int
    distractors: int
    cluster_spread: float = 0.1
    center_spread: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        if self.dim <= 0:
            raise ConfigError(f"dim must be positive, got {self.dim}")
        if self.classes < 0 or self.per_class < 0 or self.distractors < 0:
            raise ConfigError("classes, per_class and distractors must be non-negative")
        if self.cluster_spread < 0:
            raise ConfigError(f"cluster_spread must be >= 0, got {self.cluster_spread}")
        if self.center_spread <= 0:
            raise ConfigError(f"center_spread must be > 0, got {self.center_spread}")


def class_name(index: int, total: int) -> str:
    width = max(2, len(str(max(total - 1, 0))))
    return f"class_{index:0{width}d}"


def generate_synthetic(cfg: SynthConfig) -> tuple[FeatureStore, LabelSet]:
    """Deterministically generate a labeled store per ``cfg``.

    Row order is class 0 members, class 1 members, ..., then distractors, so
    ids are predictable. The same config always yields bitwise-identical data.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    centers = rng.standard_normal((cfg.classes, cfg.dim)) * cfg.center_spread
    blocks = []
    names: list[str] = []
    class_ids: dict[str, set[int]] = {}
    next_id = 0
    for c in range(cfg.classes):
        members = centers[c] + rng.standard_normal((cfg.per_class, cfg.dim)) * cfg.cluster_spread
        blocks.append(members)
        cname = class_name(c, cfg.classes)
        class_ids[cname] = set(range(next_id, next_id + cfg.per_class))
        names.extend(f"{cname}-{i:04d}" for i in range(cfg.per_class))
        next_id += cfg.per_class
    if cfg.distractors:
        blocks.append(rng.standard_normal((cfg.distractors, cfg.dim)) * cfg.center_spread)
        names.extend(f"bg-{i:06d}" for i in range(cfg.distractors))
    if not blocks:
        raise EmptyStoreError("config generates zero rows")
    data = normalize_rows(np.vstack(blocks))
    store = FeatureStore(data, names=names)
    labels = LabelSet({k: frozenset(v) for k, v in class_ids.items()})
    return store, labels


@dataclasses.dataclass(frozen=True)
class CorpusBundle:
    """Paired train/test corpora over shared class centers, plus a negative pool.

    ``train`` holds the streamable per-class positives, ``test`` the ranked
    repository (fresh positives of the same classes plus distractors), and
    ``negatives`` a fixed pool of background draws. The three stores use
    independent id spaces.
    """

    train: FeatureStore
    train_labels: LabelSet
    test: FeatureStore
    test_labels: LabelSet
    negatives: FeatureStore


def generate_corpus_bundle(
    cfg: SynthConfig,
    train_per_class: int,
    negative_count: int,
) -> CorpusBundle:
    """Draw train and test sets around one set of class centers.

    ``cfg.per_class`` and ``cfg.distractors`` size the test repository;
    ``train_per_class`` sizes the train-side positives. Train and test members
    are independent draws, so nothing in the repository is ever fed.
    """
    cfg.validate()
    if cfg.classes == 0:
        raise ConfigError("corpus bundle needs at least one class")
    if train_per_class <= 0 or negative_count <= 0:
        raise ConfigError("train_per_class and negative_count must be positive")
    rng = np.random.default_rng(cfg.seed)
    centers = rng.standard_normal((cfg.classes, cfg.dim)) * cfg.center_spread

    def draw_members(per_class: int, tag: str) -> tuple[FeatureStore, LabelSet]:
        blocks, names, class_ids = [], [], {}
        for c in range(cfg.classes):
            blocks.append(centers[c] + rng.standard_normal((per_class, cfg.dim)) * cfg.cluster_spread)
            cname = class_name(c, cfg.classes)
            class_ids[cname] = frozenset(range(c * per_class, (c + 1) * per_class))
            names.extend(f"{cname}-{tag}{i:04d}" for i in range(per_class))
        return blocks, names, class_ids

    train_blocks, train_names, train_classes = draw_members(train_per_class, "t")
    test_blocks, test_names, test_classes = draw_members(cfg.per_class, "r")
    if cfg.distractors:
        test_blocks.append(rng.standard_normal((cfg.distractors, cfg.dim)) * cfg.center_spread)
        test_names.extend(f"bg-{i:06d}" for i in range(cfg.distractors))
    neg_data = rng.standard_normal((negative_count, cfg.dim)) * cfg.center_spread

    train = FeatureStore(normalize_rows(np.vstack(train_blocks)), names=train_names)
    test = FeatureStore(normalize_rows(np.vstack(test_blocks)), names=test_names)
    negatives = FeatureStore(normalize_rows(neg_data))
    return CorpusBundle(train, LabelSet(train_classes), test, LabelSet(test_classes), negatives)
