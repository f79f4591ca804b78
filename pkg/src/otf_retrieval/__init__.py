"""On-the-fly ranking over precomputed feature repositories.

Feed a handful of positive examples, learn a linear ranking model online,
and re-rank a large repository of dense, product-quantized, or binary
feature vectors while the model is still training.
"""

__version__ = "0.1.0"

from .binary import BinaryCodec, TightFrame, binarize, hamming_distance, make_tight_frame
from .errors import (
    ConfigError,
    CorruptionError,
    DegenerateInputError,
    EmptyStoreError,
    FormatError,
    InsufficientDataError,
    NotReadyError,
    QueryResolutionError,
    RetrievalError,
    SessionLimitError,
    SessionNotFoundError,
)
from .evaluate import (
    ConvergenceTrace,
    ScenarioConfig,
    ScenarioReport,
    StreamConfig,
    precision_at_k,
    run_convergence,
    run_scenario,
)
from .model import LinearModel, load_model, write_model
from .pq import PQCodebook, PQConfig, learn_pq_codebook, pq_decode, pq_encode
from .ranker import RankedList, RankerConfig, Repository, top_k
from .session import CorpusSource, QuerySession, SessionConfig, StoreSource, run_simulated
from .store import (
    FeatureStore,
    LabelSet,
    SynthConfig,
    generate_corpus_bundle,
    generate_synthetic,
    load_features,
    load_labels,
    normalize_rows,
    write_features,
    write_labels,
)
from .trainer import BatchTrainConfig, OnlineTrainer, TrainerConfig, pegasos_step, train_batch

__all__ = [
    "__version__",
    "BinaryCodec", "TightFrame", "binarize", "hamming_distance", "make_tight_frame",
    "ConfigError", "CorruptionError", "DegenerateInputError", "EmptyStoreError",
    "FormatError", "InsufficientDataError", "NotReadyError", "QueryResolutionError",
    "RetrievalError", "SessionLimitError", "SessionNotFoundError",
    "ConvergenceTrace", "ScenarioConfig", "ScenarioReport", "StreamConfig",
    "precision_at_k", "run_convergence", "run_scenario",
    "LinearModel", "load_model", "write_model",
    "PQCodebook", "PQConfig", "learn_pq_codebook", "pq_decode", "pq_encode",
    "RankedList", "RankerConfig", "Repository", "top_k",
    "CorpusSource", "QuerySession", "SessionConfig", "StoreSource", "run_simulated",
    "FeatureStore", "LabelSet", "SynthConfig", "generate_corpus_bundle",
    "generate_synthetic", "load_features", "load_labels", "normalize_rows",
    "write_features", "write_labels",
    "BatchTrainConfig", "OnlineTrainer", "TrainerConfig", "pegasos_step", "train_batch",
]
