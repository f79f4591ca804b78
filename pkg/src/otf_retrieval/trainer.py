"""Linear SVM training, streaming and fixed-set.

Both trainers run mini-batch Pegasos on the hinge loss with no bias term:
at step t the learning rate is 1/(lam*t), full-batch shrinkage applies to the
regularizer, and only margin violators contribute gradient mass. The optional
projection step caps the weight norm at 1/sqrt(lam) after every update.

The streaming trainer draws balanced batches, half from the growing pool of
positives and half from a fixed negative pool, both uniformly with
replacement, so ranking can begin while positives are still arriving. The
fixed-set trainer is a conventional SVM fit: uniform batches over the pooled
labeled data, regularization set through C, and a tail average of iterates.
"""

from __future__ import annotations

import dataclasses
import math
import threading
from typing import Callable

import numpy as np

from .errors import ConfigError, InsufficientDataError, NotReadyError
from .model import LinearModel
from .store import FeatureStore

BatchHook = Callable[[np.ndarray, np.ndarray], None]


@dataclasses.dataclass(frozen=True)
class TrainerConfig:
    """Streaming trainer knobs.

    lam is the regularization strength; batch_size must be even so batches
    split half positive, half negative.
    """

    lam: float = 1.0
    batch_size: int = 32
    project: bool = True
    seed: int = 0

    def validate(self) -> None:
        if self.lam <= 0:
            raise ConfigError(f"lam must be positive, got {self.lam}")
        if self.batch_size < 2 or self.batch_size % 2 != 0:
            raise ConfigError(f"batch_size must be an even number >= 2, got {self.batch_size}")


def _apply_update(
    weights: np.ndarray,
    step_index: int,
    batch: np.ndarray,
    labels: np.ndarray,
    lam: float,
    batch_size: int,
    project: bool,
) -> np.ndarray:
    """Shared Pegasos update: shrink, add violator gradients, optionally project."""
    eta = 1.0 / (lam * step_index)
    margins = labels * (batch @ weights)
    violators = margins < 1.0
    grad = (labels[violators, np.newaxis] * batch[violators]).sum(axis=0)
    new_w = (1.0 - eta * lam) * weights + (eta / batch_size) * grad
    if project:
        radius = 1.0 / math.sqrt(lam)
        norm = float(np.linalg.norm(new_w))
        if norm > radius:
            new_w *= radius / norm
    return new_w


def pegasos_step(
    weights: np.ndarray,
    step_index: int,
    positives: np.ndarray,
    negatives: np.ndarray,
    cfg: TrainerConfig,
    rng: np.random.Generator,
    batch_hook: BatchHook | None = None,
) -> np.ndarray:
    """One balanced mini-batch update; returns the new weight vector.

    step_index is 1-based. Raises NotReadyError with an empty positive pool
    and InsufficientDataError with an empty negative pool.
    """
    cfg.validate()
    if step_index < 1:
        raise ConfigError(f"step_index must be >= 1, got {step_index}")
    if len(positives) == 0:
        raise NotReadyError("no positives available yet")
    if len(negatives) == 0:
        raise InsufficientDataError("negative pool is empty")
    half = cfg.batch_size // 2
    pos_idx = rng.integers(0, len(positives), size=half)
    neg_idx = rng.integers(0, len(negatives), size=half)
    if batch_hook is not None:
        batch_hook(pos_idx, neg_idx)
    batch = np.concatenate(
        [np.asarray(positives, dtype=np.float64)[pos_idx], np.asarray(negatives, dtype=np.float64)[neg_idx]]
    )
    labels = np.concatenate([np.ones(half), -np.ones(half)])
    return _apply_update(
        np.asarray(weights, dtype=np.float64), step_index, batch, labels, cfg.lam, cfg.batch_size, cfg.project
    )


class OnlineTrainer:
    """Single-writer streaming trainer with lock-protected snapshots.

    step() must be called from one thread at a time; snapshot() may be called
    from any thread and always sees a whole iterate, never a half-written one
    (updates swap the weight reference under the lock). Republishing an
    unchanged iterate reuses the previous version number.
    """

    def __init__(
        self,
        dim: int,
        negatives: FeatureStore | np.ndarray,
        cfg: TrainerConfig | None = None,
        batch_hook: BatchHook | None = None,
    ):
        self.cfg = cfg if cfg is not None else TrainerConfig()
        self.cfg.validate()
        neg = negatives.data if isinstance(negatives, FeatureStore) else np.asarray(negatives, dtype=np.float32)
        if neg.ndim != 2 or neg.shape[0] == 0:
            raise InsufficientDataError("negative pool must be a non-empty 2-D array")
        if neg.shape[1] != dim:
            raise ConfigError(f"negative pool dim {neg.shape[1]} does not match model dim {dim}")
        self._negatives = neg
        self._batch_hook = batch_hook
        self._rng = np.random.default_rng(self.cfg.seed)
        self._lock = threading.Lock()
        self._weights = np.zeros(dim, dtype=np.float64)
        self._iteration = 0
        self._version = 0
        self._published_iteration = -1

    @property
    def iteration(self) -> int:
        return self._iteration

    def step(self, positives: np.ndarray) -> int:
        """Run one update against the given positive pool; returns the step index."""
        new_w = pegasos_step(
            self._weights,
            self._iteration + 1,
            positives,
            self._negatives,
            self.cfg,
            self._rng,
            self._batch_hook,
        )
        with self._lock:
            self._weights = new_w
            self._iteration += 1
            return self._iteration

    def snapshot(self) -> LinearModel:
        """Immutable copy of the current iterate.

        The version number increments only when the iterate moved since the
        last snapshot, so an idle trainer republishes the same version.
        """
        with self._lock:
            if self._iteration == 0:
                raise NotReadyError("no training step has run yet")
            if self._iteration != self._published_iteration:
                self._version += 1
                self._published_iteration = self._iteration
            return LinearModel(self._weights.copy(), self._iteration, self._version)


# -- fixed-set training ------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class BatchTrainConfig:
    """Fixed-set SVM knobs: C-parameterized regularization, epoch budget."""

    c: float = 0.25
    batch_size: int = 32
    epochs: int = 60
    project: bool = True
    seed: int = 0

    def validate(self) -> None:
        if self.c <= 0:
            raise ConfigError(f"c must be positive, got {self.c}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")


def hinge_objective(weights: np.ndarray, features: np.ndarray, labels: np.ndarray, lam: float) -> float:
    """Regularized mean hinge loss ``lam/2 * |w|^2 + mean(max(0, 1 - y<w,x>))``."""
    w = np.asarray(weights, dtype=np.float64)
    margins = labels * (np.asarray(features, dtype=np.float64) @ w)
    return float(0.5 * lam * np.dot(w, w) + np.maximum(0.0, 1.0 - margins).mean())


def train_batch(
    positives: FeatureStore | np.ndarray,
    negatives: FeatureStore | np.ndarray,
    cfg: BatchTrainConfig | None = None,
    objective_history: list[float] | None = None,
) -> LinearModel:
    """Fit a linear SVM on the pooled labeled set.

    Regularization is lam = 1 / (c * n) for n pooled examples. The run keeps
    the tail average over the last quarter of iterates plus the best iterate
    seen at epoch boundaries, and returns whichever of those scores the lowest
    objective, so the result is never worse than anything observed.

    If given, objective_history collects the per-epoch objective values.
    """
    cfg = cfg if cfg is not None else BatchTrainConfig()
    cfg.validate()
    pos = positives.data if isinstance(positives, FeatureStore) else np.asarray(positives, dtype=np.float64)
    neg = negatives.data if isinstance(negatives, FeatureStore) else np.asarray(negatives, dtype=np.float64)
    if len(pos) == 0 or len(neg) == 0:
        raise InsufficientDataError("both classes need at least one example")
    if pos.shape[1] != neg.shape[1]:
        raise ConfigError(f"dim mismatch: positives {pos.shape[1]}, negatives {neg.shape[1]}")
    features = np.concatenate([np.asarray(pos, dtype=np.float64), np.asarray(neg, dtype=np.float64)])
    labels = np.concatenate([np.ones(len(pos)), -np.ones(len(neg))])
    n = len(features)
    lam = 1.0 / (cfg.c * n)
    batch_size = min(cfg.batch_size, n)
    steps_per_epoch = math.ceil(n / batch_size)
    total_steps = cfg.epochs * steps_per_epoch
    tail_len = max(1, total_steps // 4)
    tail_start = total_steps - tail_len

    rng = np.random.default_rng(cfg.seed)
    w = np.zeros(features.shape[1], dtype=np.float64)
    tail_sum = np.zeros_like(w)
    best_obj = math.inf
    best_w = w.copy()
    for t in range(1, total_steps + 1):
        idx = rng.integers(0, n, size=batch_size)
        w = _apply_update(w, t, features[idx], labels[idx], lam, batch_size, cfg.project)
        if t > tail_start:
            tail_sum += w
        if t % steps_per_epoch == 0:
            obj = hinge_objective(w, features, labels, lam)
            if objective_history is not None:
                objective_history.append(obj)
            if obj < best_obj:
                best_obj = obj
                best_w = w.copy()
    averaged = tail_sum / tail_len
    avg_obj = hinge_objective(averaged, features, labels, lam)
    final = averaged if avg_obj <= best_obj else best_w
    return LinearModel(final, total_steps)
