"""Evaluation harness: precision metrics, per-class scenarios, convergence traces.

A scenario trains one ranking model per labeled class (batch or streaming),
ranks a held-out repository with the class's own training ids excludable, and
reports precision at K plus wall timings. A convergence run replays one
streaming session on the virtual clock and records precision after every
published list.
"""

import dataclasses
import json
import time
import warnings
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .ranker import RankerConfig, Repository
from .session import QuerySession, SessionConfig, run_simulated
from .store import FeatureStore, LabelSet
from .trainer import BatchTrainConfig, TrainerConfig, train_batch


def precision_at_k(ranked_ids, positive_ids, k: int) -> float:
    """Fraction of the top k that are relevant; the denominator is always k.

    A ranked list shorter than k warns and still divides by k, so truncated
    lists are penalized rather than flattered.
    """
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    ids = [int(i) for i in ranked_ids]
    if len(ids) == 0:
        raise ConfigError("ranked list is empty")
    if len(ids) < k:
        warnings.warn(
            f"ranked list has {len(ids)} entries, fewer than k={k}; denominator stays k",
            stacklevel=2,
        )
    wanted = {int(i) for i in positive_ids}
    hits = sum(1 for i in ids[:k] if i in wanted)
    return hits / k


@dataclasses.dataclass(frozen=True)
class StreamConfig:
    """Streaming-mode training schedule for scenarios and convergence runs."""

    rate: float = 12.0
    duration: float = 5.0
    trainer: TrainerConfig = dataclasses.field(
        default_factory=lambda: TrainerConfig(lam=0.02, batch_size=32)
    )
    steps_per_second: float = 500.0
    interval: float = 0.18

    def validate(self) -> None:
        if self.rate < 0:
            raise ConfigError(f"rate must be >= 0, got {self.rate}")
        if self.duration <= 0:
            raise ConfigError(f"duration must be positive, got {self.duration}")
        if self.steps_per_second <= 0:
            raise ConfigError(f"steps_per_second must be positive, got {self.steps_per_second}")
        if self.interval <= 0:
            raise ConfigError(f"interval must be positive, got {self.interval}")
        self.trainer.validate()


@dataclasses.dataclass(frozen=True)
class ScenarioConfig:
    """What to measure: cutoff, exclusions, and exactly one training mode."""

    k: int = 100
    excluded_ids: frozenset = frozenset()
    batch: BatchTrainConfig | None = None
    stream: StreamConfig | None = None

    def validate(self) -> None:
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if (self.batch is None) == (self.stream is None):
            raise ConfigError("exactly one of batch or stream mode must be set")
        if self.batch is not None:
            self.batch.validate()
        else:
            self.stream.validate()


@dataclasses.dataclass(frozen=True)
class ClassResult:
    name: str
    precision: float | None
    train_time_s: float
    rank_time_s: float


@dataclasses.dataclass(frozen=True)
class ScenarioReport:
    k: int
    results: tuple
    mean_precision: float | None
    repository_count: int
    representation: str
    payload_bytes: int

    def undefined_classes(self) -> list:
        return [r.name for r in self.results if r.precision is None]


@dataclasses.dataclass(frozen=True)
class TraceEntry:
    t: float
    positives_fed: int
    precision: float
    top_ids: tuple


@dataclasses.dataclass(frozen=True)
class ConvergenceTrace:
    class_name: str
    k: int
    entries: tuple

    @property
    def final_precision(self) -> float | None:
        return self.entries[-1].precision if self.entries else None


def _as_repository(test_side) -> Repository:
    if isinstance(test_side, Repository):
        return test_side
    return Repository.dense(test_side)


def _class_rows(train: FeatureStore, labels: LabelSet, name: str) -> np.ndarray:
    ids = sorted(labels.ids_for(name))
    rows = np.array([train.row_of_id(int(i)) for i in ids], dtype=np.int64)
    return train.data[rows]


def _other_rows(train: FeatureStore, labels: LabelSet, name: str) -> np.ndarray:
    keep = labels.ids_for(name)
    mask = np.array([int(i) not in keep for i in train.ids], dtype=bool)
    return train.data[mask]


def _stream_final_model(
    repo: Repository,
    positives_raw: np.ndarray,
    adapted_negatives: np.ndarray,
    stream: StreamConfig,
    seed: int,
):
    # interval beyond the horizon: the replay trains but never publishes
    cfg = SessionConfig(
        rate=stream.rate,
        ranker=RankerConfig(k=1, interval=stream.duration * 10.0),
        trainer=stream.trainer,
        steps_per_second=stream.steps_per_second,
    )
    session = QuerySession("eval", "eval", repo, adapted_negatives, cfg, trainer_seed=seed)
    run_simulated(session, positives_raw, duration=stream.duration)
    return session.trainer.snapshot()


def run_scenario(
    train: FeatureStore,
    train_labels: LabelSet,
    test_side,
    test_labels: LabelSet,
    cfg: ScenarioConfig,
    negatives: FeatureStore | None = None,
) -> ScenarioReport:
    """Train one model per class and measure precision at k on the test side.

    Classes whose test positives are all excluded get an undefined precision,
    a warning, and no vote in the mean. With no negatives store, each class
    trains against the other classes' training vectors.
    """
    cfg.validate()
    repository = _as_repository(test_side)
    repo = repository.without_ids(cfg.excluded_ids) if cfg.excluded_ids else repository
    results = []
    for index, name in enumerate(train_labels.class_names()):
        pos_raw = _class_rows(train, train_labels, name)
        neg_raw = negatives.data if negatives is not None else _other_rows(train, train_labels, name)
        test_pos = {int(i) for i in test_labels.ids_for(name)} - set(map(int, cfg.excluded_ids))
        began = time.perf_counter()
        if cfg.batch is not None:
            model = train_batch(
                repo.adapt_training_vectors(pos_raw),
                repo.adapt_training_vectors(neg_raw),
                dataclasses.replace(cfg.batch, seed=cfg.batch.seed + index),
            )
        else:
            model = _stream_final_model(
                repo,
                pos_raw,
                repo.adapt_training_vectors(neg_raw),
                cfg.stream,
                seed=cfg.stream.trainer.seed + index,
            )
        train_time = time.perf_counter() - began
        began = time.perf_counter()
        ranked = repo.rank(model, cfg.k)
        rank_time = time.perf_counter() - began
        if not test_pos:
            warnings.warn(
                f"class {name} has no test positives after exclusion; skipping in mean",
                stacklevel=2,
            )
            results.append(ClassResult(name, None, train_time, rank_time))
            continue
        prec = precision_at_k(ranked.ids, test_pos, cfg.k)
        results.append(ClassResult(name, prec, train_time, rank_time))
    defined = [r.precision for r in results if r.precision is not None]
    mean = sum(defined) / len(defined) if defined else None
    return ScenarioReport(
        k=cfg.k,
        results=tuple(results),
        mean_precision=mean,
        repository_count=repo.count,
        representation=repo.kind,
        payload_bytes=repo.payload_bytes(),
    )


def run_convergence(
    train: FeatureStore,
    train_labels: LabelSet,
    test_side,
    test_labels: LabelSet,
    class_name: str,
    cfg: ScenarioConfig,
) -> ConvergenceTrace:
    """Replay one streaming session and record precision after every published list."""
    cfg.validate()
    if cfg.stream is None:
        raise ConfigError("convergence runs require stream mode")
    if class_name not in train_labels.class_names():
        raise ConfigError(f"unknown class {class_name!r}")
    repository = _as_repository(test_side)
    repo = repository.without_ids(cfg.excluded_ids) if cfg.excluded_ids else repository
    test_pos = {int(i) for i in test_labels.ids_for(class_name)} - set(map(int, cfg.excluded_ids))
    if not test_pos:
        raise ConfigError(f"class {class_name!r} has no test positives after exclusion")
    pos_raw = _class_rows(train, train_labels, class_name)
    neg_raw = _other_rows(train, train_labels, class_name)
    session_cfg = SessionConfig(
        rate=cfg.stream.rate,
        ranker=RankerConfig(k=cfg.k, interval=cfg.stream.interval),
        trainer=cfg.stream.trainer,
        steps_per_second=cfg.stream.steps_per_second,
    )
    session = QuerySession(
        "trace", class_name, repo, repo.adapt_training_vectors(neg_raw),
        session_cfg, trainer_seed=cfg.stream.trainer.seed,
    )
    entries = []

    def on_publish(pub):
        ids = tuple(int(i) for i in pub.ranked.ids)
        entries.append(
            TraceEntry(
                t=pub.ranked.produced_at,
                positives_fed=pub.positives_fed,
                precision=precision_at_k(ids, test_pos, cfg.k) if ids else 0.0,
                top_ids=ids,
            )
        )

    run_simulated(session, pos_raw, duration=cfg.stream.duration, on_publish=on_publish)
    return ConvergenceTrace(class_name=class_name, k=cfg.k, entries=tuple(entries))


# -- report writers -----------------------------------------------------------

def _fmt_precision(value: float | None) -> str:
    return "undefined" if value is None else f"{value:.6f}"


def write_scenario_tsv(report: ScenarioReport, path: str | Path) -> None:
    lines = ["class\tprecision_at_k\ttrain_time_s\trank_time_s"]
    for r in report.results:
        lines.append(
            f"{r.name}\t{_fmt_precision(r.precision)}\t{r.train_time_s:.6f}\t{r.rank_time_s:.6f}"
        )
    total_train = sum(r.train_time_s for r in report.results)
    total_rank = sum(r.rank_time_s for r in report.results)
    lines.append(
        f"mean\t{_fmt_precision(report.mean_precision)}\t{total_train:.6f}\t{total_rank:.6f}"
    )
    Path(path).write_text("\n".join(lines) + "\n")


def write_scenario_json(report: ScenarioReport, path: str | Path) -> None:
    doc = {
        "k": report.k,
        "classes": {
            r.name: {
                "precision_at_k": r.precision,
                "train_time_s": r.train_time_s,
                "rank_time_s": r.rank_time_s,
            }
            for r in report.results
        },
        "mean_precision": report.mean_precision,
        "undefined_classes": report.undefined_classes(),
        "repository": {
            "count": report.repository_count,
            "representation": report.representation,
            "payload_bytes": report.payload_bytes,
        },
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def write_trace_tsv(trace: ConvergenceTrace, path: str | Path) -> None:
    lines = ["t_seconds\tpositives_fed\tprecision_at_k"]
    for e in trace.entries:
        lines.append(f"{e.t:.6f}\t{e.positives_fed}\t{e.precision:.6f}")
    Path(path).write_text("\n".join(lines) + "\n")
