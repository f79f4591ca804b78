"""Linear ranking model: a weight vector with provenance counters.

Snapshots of the evolving model are immutable; the version number orders the
snapshots a session publishes, and iteration counts optimizer steps. The
``OTFM`` file stores weights as binary32, so a round trip keeps exactly
float32 precision.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import numpy as np

from . import formats
from .errors import ConfigError


@dataclasses.dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray  # float64, read-only
    iteration: int
    version: int = 0

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise ConfigError(f"weights must be a non-empty 1-D array, got shape {w.shape}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return self.weights.shape[0]


def write_model(model: LinearModel, path: str | Path) -> None:
    with open(path, "wb") as fh:
        formats.write_magic(fh, formats.MAGIC_MODEL)
        formats.write_u32(fh, model.dim)
        formats.write_u64(fh, model.iteration)
        formats.write_f32(fh, model.weights)


def load_model(path: str | Path) -> LinearModel:
    path = Path(path)
    with open(path, "rb") as fh:
        formats.check_magic(fh, formats.MAGIC_MODEL)
        dim = formats.read_u32(fh, "dim")
        iteration = formats.read_u64(fh, "iteration")
        weights = formats.read_f32(fh, dim, "weights")
        formats.expect_eof(fh, str(path))
    return LinearModel(weights.astype(np.float64), iteration)
