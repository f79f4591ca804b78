"""Live query sessions: feed positives, train continuously, publish rankings.

One session owns three single-writer roles with immutable handoff between
them: a feeder appends positives to a growing pool, a trainer folds the pool
into the model one mini-batch at a time, and a ranker periodically snapshots
the model, scores the repository, and atomically replaces the published
top-K list. Readers never see a partially-written list or model.

Two drivers exist. The simulated driver replays the whole session on a
virtual clock in one thread (bitwise reproducible, used by evaluation and by
deterministic service modes). The wall-clock driver runs the three roles as
real threads for live serving.
"""

from __future__ import annotations

import dataclasses
import heapq
import threading
import time
import zlib
from pathlib import Path

import numpy as np

from .errors import ConfigError, NotReadyError, QueryResolutionError
from .ranker import RankedList, RankerConfig, Repository, top_k
from .store import FeatureStore, load_features
from .trainer import OnlineTrainer, TrainerConfig

DEFAULT_FEED_RATE = 12.0
DEFAULT_STEPS_PER_SECOND = 500.0

STATE_WARMING = "warming"
STATE_TRAINING = "training"
STATE_STOPPED = "stopped"
STATE_FAILED = "failed"

_EVENT_FEED = 0
_EVENT_TRAIN = 1
_EVENT_RANK = 2


@dataclasses.dataclass(frozen=True)
class SessionConfig:
    """Per-session knobs; service-level defaults fill these in."""

    rate: float = DEFAULT_FEED_RATE
    ranker: RankerConfig = dataclasses.field(default_factory=RankerConfig)
    trainer: TrainerConfig = dataclasses.field(default_factory=TrainerConfig)
    steps_per_second: float = DEFAULT_STEPS_PER_SECOND

    def validate(self) -> None:
        if self.rate < 0:
            raise ConfigError(f"rate must be >= 0, got {self.rate}")
        if self.steps_per_second <= 0:
            raise ConfigError(f"steps_per_second must be positive, got {self.steps_per_second}")
        self.ranker.validate()
        self.trainer.validate()


class PositivePool:
    """Append-only float32 pool whose snapshots are stable prefix views.

    Rows already handed out through snapshot() are never mutated; growth
    reallocates, so an older snapshot keeps pointing at the old buffer.
    """

    def __init__(self, dim: int, initial_capacity: int = 64):
        self._dim = dim
        self._buf = np.empty((initial_capacity, dim), dtype=np.float32)
        self._count = 0
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return self._count

    def append(self, vector: np.ndarray) -> int:
        vec = np.asarray(vector, dtype=np.float32)
        if vec.shape != (self._dim,):
            raise ConfigError(f"vector shape {vec.shape} does not match pool dim {self._dim}")
        with self._lock:
            if self._count == self._buf.shape[0]:
                grown = np.empty((self._buf.shape[0] * 2, self._dim), dtype=np.float32)
                grown[: self._count] = self._buf[: self._count]
                self._buf = grown
            self._buf[self._count] = vec
            self._count += 1
            return self._count

    def snapshot(self) -> np.ndarray:
        with self._lock:
            return self._buf[: self._count]


@dataclasses.dataclass(frozen=True)
class Publication:
    """One published ranking plus the session stats frozen at publish time."""

    ranked: RankedList
    positives_fed: int
    steps_applied: int
    lists_published: int
    checksum: int

    @staticmethod
    def build(ranked: RankedList, positives_fed: int, steps_applied: int, lists_published: int) -> "Publication":
        digest = zlib.crc32(ranked.ids.tobytes())
        digest = zlib.crc32(ranked.scores.tobytes(), digest)
        digest = zlib.crc32(str(ranked.model_version).encode(), digest)
        return Publication(ranked, positives_fed, steps_applied, lists_published, digest)

    def verify_checksum(self) -> bool:
        return self.checksum == Publication.build(
            self.ranked, self.positives_fed, self.steps_applied, self.lists_published
        ).checksum


class QuerySession:
    """State of one live query: pool, trainer, and the published list.

    The session object is driver-agnostic; feed_one / train_step / rank_tick
    are invoked either from the simulated event loop or from wall threads.
    """

    def __init__(
        self,
        session_id: str,
        query_text: str,
        repository: Repository,
        adapted_negatives: np.ndarray,
        cfg: SessionConfig,
        trainer_seed: int = 0,
        created_at: float = 0.0,
    ):
        cfg.validate()
        self.id = session_id
        self.query_text = query_text
        self.cfg = cfg
        self.repository = repository
        self.created_at = created_at
        self.stopped_at: float | None = None
        self.failure: str | None = None
        self.pool = PositivePool(repository.model_dim)
        self.trainer = OnlineTrainer(
            repository.model_dim,
            adapted_negatives,
            dataclasses.replace(cfg.trainer, seed=trainer_seed),
        )
        self._state = STATE_WARMING
        self._lock = threading.Lock()
        self._publication: Publication | None = None
        self._lists_published = 0
        self.publication_history: list[Publication] = []

    # -- state ---------------------------------------------------------------

    @property
    def state(self) -> str:
        with self._lock:
            return self._state

    def mark_failed(self, reason: str, now: float = 0.0) -> None:
        with self._lock:
            self._state = STATE_FAILED
            self.failure = reason
            self.stopped_at = now

    def mark_stopped(self, now: float = 0.0) -> None:
        with self._lock:
            if self._state not in (STATE_FAILED, STATE_STOPPED):
                self._state = STATE_STOPPED
                self.stopped_at = now

    @property
    def is_live(self) -> bool:
        return self.state in (STATE_WARMING, STATE_TRAINING)

    # -- the three single-writer roles --------------------------------------

    def feed_one(self, vector: np.ndarray) -> None:
        """Adapt one raw positive into model space and append it to the pool."""
        adapted = self.repository.adapt_training_vectors(np.asarray(vector, dtype=np.float32))
        self.pool.append(adapted)
        with self._lock:
            if self._state == STATE_WARMING:
                self._state = STATE_TRAINING

    def train_step(self) -> bool:
        """One mini-batch update; returns False while the pool is still empty."""
        positives = self.pool.snapshot()
        if len(positives) == 0:
            return False
        self.trainer.step(positives)
        return True

    def rank_tick(self, now: float) -> bool:
        """Score the repository under the latest snapshot and publish the top K.

        Publishes nothing before the first training step. Returns True when a
        list was published.
        """
        try:
            model = self.trainer.snapshot()
        except NotReadyError:
            return False
        ranked = self.repository.rank(model, self.cfg.ranker.k, produced_at=now)
        with self._lock:
            self._lists_published += 1
            publication = Publication.build(
                ranked,
                positives_fed=len(self.pool),
                steps_applied=self.trainer.iteration,
                lists_published=self._lists_published,
            )
            self._publication = publication
            self.publication_history.append(publication)
        return True

    # -- readers -------------------------------------------------------------

    def latest_publication(self) -> Publication | None:
        with self._lock:
            return self._publication

    def stats(self) -> dict:
        with self._lock:
            return {
                "positives_fed": len(self.pool),
                "steps_applied": self.trainer.iteration,
                "lists_published": self._lists_published,
            }


# -- simulated driver --------------------------------------------------------

def run_simulated(
    session: QuerySession,
    vectors: np.ndarray,
    duration: float,
    on_publish=None,
) -> None:
    """Replay a whole session on a virtual clock, single-threaded.

    Feed arrivals land at (i+1)/rate, training steps run at the configured
    cadence starting with the first arrival, and rank ticks fire every
    ranker.interval. Ties process feed before train before rank, which makes
    the replay order, and therefore every published list, reproducible.
    """
    cfg = session.cfg
    if duration <= 0:
        raise ConfigError(f"duration must be positive, got {duration}")
    vectors = np.asarray(vectors, dtype=np.float32)
    events: list[tuple[float, int, int]] = []
    seq = 0
    if cfg.rate > 0:
        for i in range(len(vectors)):
            at = (i + 1) / cfg.rate
            if at > duration:
                break
            heapq.heappush(events, (at, _EVENT_FEED, seq))
            seq += 1
    ticks = int(duration / cfg.ranker.interval + 1e-9)
    for j in range(1, ticks + 1):
        heapq.heappush(events, (j * cfg.ranker.interval, _EVENT_RANK, seq))
        seq += 1

    step_gap = 1.0 / cfg.steps_per_second
    train_scheduled = False
    feed_index = 0
    while events:
        at, kind, _ = heapq.heappop(events)
        if kind == _EVENT_FEED:
            session.feed_one(vectors[feed_index])
            feed_index += 1
            if not train_scheduled:
                heapq.heappush(events, (at, _EVENT_TRAIN, seq))
                seq += 1
                train_scheduled = True
        elif kind == _EVENT_TRAIN:
            session.train_step()
            nxt = at + step_gap
            if nxt <= duration:
                heapq.heappush(events, (nxt, _EVENT_TRAIN, seq))
                seq += 1
        else:
            published = session.rank_tick(at)
            if published and on_publish is not None:
                on_publish(session.latest_publication())
    session.mark_stopped(duration)


# -- wall-clock driver -------------------------------------------------------

class WallRunner:
    """Feeder, trainer, and ranker threads around one session."""

    def __init__(self, session: QuerySession, vectors: np.ndarray):
        self.session = session
        self._vectors = np.asarray(vectors, dtype=np.float32)
        self._stop = threading.Event()
        self._threads = [
            threading.Thread(target=self._feed_loop, name=f"feeder-{session.id}", daemon=True),
            threading.Thread(target=self._train_loop, name=f"trainer-{session.id}", daemon=True),
            threading.Thread(target=self._rank_loop, name=f"ranker-{session.id}", daemon=True),
        ]

    def start(self) -> None:
        for t in self._threads:
            t.start()

    def stop(self) -> None:
        """Halt all three roles and wait for them to exit; idempotent."""
        self._stop.set()
        for t in self._threads:
            if t is not threading.current_thread():
                t.join(timeout=5.0)
        self.session.mark_stopped(time.monotonic())

    def _feed_loop(self) -> None:
        rate = self.session.cfg.rate
        if rate <= 0:
            return
        start = time.monotonic()
        for i in range(len(self._vectors)):
            target = start + (i + 1) / rate
            delay = target - time.monotonic()
            if delay > 0 and self._stop.wait(delay):
                return
            if self._stop.is_set():
                return
            self.session.feed_one(self._vectors[i])

    def _train_loop(self) -> None:
        gap = 1.0 / self.session.cfg.steps_per_second
        while not self._stop.is_set():
            began = time.monotonic()
            if not self.session.train_step():
                self._stop.wait(0.005)
                continue
            remainder = gap - (time.monotonic() - began)
            if remainder > 0:
                self._stop.wait(remainder)

    def _rank_loop(self) -> None:
        interval = self.session.cfg.ranker.interval
        next_tick = time.monotonic() + interval
        while True:
            delay = next_tick - time.monotonic()
            if delay > 0 and self._stop.wait(delay):
                return
            if self._stop.is_set():
                return
            self.session.rank_tick(time.monotonic())
            now = time.monotonic()
            next_tick += interval
            if next_tick < now:
                # a slow scoring pass skips missed ticks instead of queueing them
                next_tick = now + interval


# -- positive sources --------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class PositiveFeed:
    """A resolved query: the raw vectors to stream and the class they match."""

    class_name: str
    vectors: np.ndarray


class CorpusSource:
    """Resolve query text against per-class feature files under a root directory.

    Classes are ``<root>/<class>.otfr`` files or ``<root>/<class>/`` folders
    of feature files. Resolution tries an exact name first and falls back to a
    case-insensitive match.
    """

    def __init__(self, root: str | Path, normalize: bool = True):
        self.root = Path(root)
        if not self.root.is_dir():
            raise ConfigError(f"corpus root {self.root} is not a directory")
        self.normalize = normalize

    def class_names(self) -> list[str]:
        names = {p.stem for p in self.root.glob("*.otfr")}
        names.update(p.name for p in self.root.iterdir() if p.is_dir() and any(p.glob("*.otfr")))
        return sorted(names)

    def resolve(self, query_text: str) -> PositiveFeed:
        names = self.class_names()
        chosen = None
        if query_text in names:
            chosen = query_text
        else:
            folded = query_text.casefold()
            matches = [n for n in names if n.casefold() == folded]
            if matches:
                chosen = matches[0]
        if chosen is None:
            raise QueryResolutionError(f"no corpus class matches query {query_text!r}")
        file_form = self.root / f"{chosen}.otfr"
        if file_form.exists():
            store = load_features(file_form, normalize=self.normalize)
            return PositiveFeed(chosen, store.data)
        parts = [
            load_features(p, normalize=self.normalize).data
            for p in sorted((self.root / chosen).glob("*.otfr"))
        ]
        return PositiveFeed(chosen, np.concatenate(parts))


class StoreSource:
    """In-memory positive source: one labeled store, classes resolved by label."""

    def __init__(self, store: FeatureStore, labels):
        self._store = store
        self._labels = labels

    def class_names(self) -> list[str]:
        return self._labels.class_names()

    def resolve(self, query_text: str) -> PositiveFeed:
        names = self.class_names()
        chosen = None
        if query_text in names:
            chosen = query_text
        else:
            folded = query_text.casefold()
            matches = [n for n in names if n.casefold() == folded]
            if matches:
                chosen = matches[0]
        if chosen is None:
            raise QueryResolutionError(f"no labeled class matches query {query_text!r}")
        rows = np.array(sorted(self._labels.ids_for(chosen)), dtype=np.int64)
        positions = np.array([self._store.row_of_id(int(r)) for r in rows])
        return PositiveFeed(chosen, self._store.data[positions])
