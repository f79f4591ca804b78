"""Command line entry points for corpus prep, training, evaluation, and serving.

Every option can also come from a ``--config`` file of ``key=value`` lines
(keys are the long option names with dashes or underscores). Precedence is
command line flag, then config file, then the OTF_SEED environment variable
for seeds, then the built-in default.
"""

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .binary import BinaryCodec, binarize_store, make_tight_frame, write_binary_codes, write_frame
from .errors import ConfigError, RetrievalError
from .evaluate import (
    ScenarioConfig,
    StreamConfig,
    run_convergence,
    run_scenario,
    write_scenario_json,
    write_scenario_tsv,
    write_trace_tsv,
)
from .model import write_model
from .pq import PQConfig, learn_pq_codebook, load_codebook, pq_encode, write_codebook, write_pq_codes
from .ranker import Repository, top_k
from .store import (
    FeatureStore,
    SynthConfig,
    generate_corpus_bundle,
    load_features,
    load_labels,
    write_features,
    write_labels,
)
from .trainer import BatchTrainConfig, TrainerConfig, train_batch

SEED_ENV = "OTF_SEED"


def _read_config_file(path: str) -> dict:
    values = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"malformed config line {line!r}, expected key=value")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _add_seed(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--seed", type=int, default=0, help="random seed (OTF_SEED overrides the default)")


def _add_repr(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--representation", choices=["dense", "pq", "binary"], default="dense",
                     help="how repository vectors are stored and scored")
    sub.add_argument("--subdim", type=int, default=8, help="block width for pq")
    sub.add_argument("--centroids", type=int, default=256, help="centroids per block for pq")
    sub.add_argument("--pq-iterations", type=int, default=20, help="refinement passes for pq")
    sub.add_argument("--bits", type=int, default=1024, help="code length for binary")


def build_parser():
    parser = argparse.ArgumentParser(prog="otf", description="on-the-fly ranking over precomputed features")
    parser.add_argument("--version", action="version", version=f"otf-retrieval {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    registry = {}

    def command(name, help_text):
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("--config", default=None, help="key=value file of option defaults")
        registry[name] = sub
        return sub

    sub = command("gen-synth", "write a synthetic labeled corpus to a directory")
    sub.add_argument("--out", required=True, help="output directory")
    sub.add_argument("--dim", type=int, default=128)
    sub.add_argument("--classes", type=int, default=5)
    sub.add_argument("--per-class", type=int, default=30, help="test vectors per class")
    sub.add_argument("--train-per-class", type=int, default=40)
    sub.add_argument("--distractors", type=int, default=10000)
    sub.add_argument("--negatives", type=int, default=500)
    sub.add_argument("--cluster-spread", type=float, default=0.1)
    sub.add_argument("--center-spread", type=float, default=1.0)
    _add_seed(sub)

    sub = command("learn-pq", "fit a product quantizer to a feature file")
    sub.add_argument("--features", required=True)
    sub.add_argument("--out", required=True, help="codebook output path")
    sub.add_argument("--subdim", type=int, default=8)
    sub.add_argument("--centroids", type=int, default=256)
    sub.add_argument("--iterations", type=int, default=25)
    sub.add_argument("--raw", action="store_true", help="skip row normalization on load")
    _add_seed(sub)

    sub = command("encode", "quantize a feature file with an existing codebook")
    sub.add_argument("--features", required=True)
    sub.add_argument("--codebook", required=True)
    sub.add_argument("--out", required=True, help="codes output path")
    sub.add_argument("--raw", action="store_true", help="skip row normalization on load")

    sub = command("binarize", "compress a feature file to packed binary codes")
    sub.add_argument("--features", required=True)
    sub.add_argument("--out", required=True, help="codes output path")
    sub.add_argument("--frame-out", default=None, help="frame output path (default: codes path with .otfb)")
    sub.add_argument("--bits", type=int, default=1024)
    sub.add_argument("--codebook", default=None, help="take the centering vector from this codebook")
    sub.add_argument("--raw", action="store_true", help="skip row normalization on load")
    _add_seed(sub)

    sub = command("train-batch", "fit a ranking model from positive and negative feature files")
    sub.add_argument("--positives", required=True)
    sub.add_argument("--negatives", required=True)
    sub.add_argument("--out", required=True, help="model output path")
    sub.add_argument("--c", type=float, default=0.25, help="inverse regularization scale")
    sub.add_argument("--batch-size", type=int, default=32)
    sub.add_argument("--epochs", type=int, default=60)
    _add_seed(sub)

    sub = command("evaluate", "score every class of a corpus directory and report precision")
    sub.add_argument("--corpus", required=True, help="directory from gen-synth")
    sub.add_argument("--k", type=int, default=100)
    sub.add_argument("--mode", choices=["batch", "stream"], default="batch")
    sub.add_argument(
        "--c", type=float, default=0.05,
        help="batch mode inverse regularization scale; the small default keeps "
             "model norms low enough to hold off large distractor pools",
    )
    sub.add_argument("--epochs", type=int, default=60, help="batch mode epochs")
    sub.add_argument("--rate", type=float, default=12.0, help="stream mode positives per second")
    sub.add_argument("--duration", type=float, default=5.0, help="stream mode seconds")
    sub.add_argument("--lam", type=float, default=0.02, help="stream mode regularization")
    sub.add_argument("--batch-size", type=int, default=32)
    sub.add_argument("--out-tsv", default="report.tsv")
    sub.add_argument("--out-json", default="report.json")
    _add_repr(sub)
    _add_seed(sub)

    sub = command("convergence", "trace precision against time for one streamed class")
    sub.add_argument("--corpus", required=True, help="directory from gen-synth")
    sub.add_argument("--class-name", required=True)
    sub.add_argument("--k", type=int, default=100)
    sub.add_argument("--rate", type=float, default=12.0)
    sub.add_argument("--duration", type=float, default=5.0)
    sub.add_argument("--lam", type=float, default=0.02)
    sub.add_argument("--batch-size", type=int, default=32)
    sub.add_argument("--interval", type=float, default=0.18)
    sub.add_argument("--steps-per-second", type=float, default=500.0)
    sub.add_argument("--out", default="trace.tsv")
    _add_repr(sub)
    _add_seed(sub)

    sub = command("serve", "run the retrieval service over a corpus directory")
    sub.add_argument("--corpus", required=True, help="directory from gen-synth")
    sub.add_argument("--host", default="127.0.0.1")
    sub.add_argument("--port", type=int, default=8321)
    sub.add_argument("--k", type=int, default=100)
    sub.add_argument("--rate", type=float, default=12.0)
    sub.add_argument("--interval", type=float, default=0.18)
    sub.add_argument("--lam", type=float, default=0.02)
    sub.add_argument("--batch-size", type=int, default=32)
    sub.add_argument("--steps-per-second", type=float, default=500.0)
    sub.add_argument("--max-sessions", type=int, default=8)
    sub.add_argument("--ui", default=None, help="directory of static UI files to mount at /ui")
    _add_repr(sub)
    _add_seed(sub)

    sub = command("bench-rank", "measure scoring and ranking throughput on a feature file")
    sub.add_argument("--features", required=True)
    sub.add_argument("--k", type=int, default=100)
    sub.add_argument("--repeats", type=int, default=5)
    _add_repr(sub)
    _add_seed(sub)

    return parser, registry


def _apply_layered_defaults(args_first, sub) -> None:
    """Fold config file values and OTF_SEED into the subcommand's defaults."""
    valid = {action.dest for action in sub._actions}
    layered = {}
    if args_first.config:
        file_values = _read_config_file(args_first.config)
        layered.update({k: v for k, v in file_values.items() if k in valid})
    if "seed" in valid and "seed" not in layered and os.environ.get(SEED_ENV):
        layered["seed"] = os.environ[SEED_ENV]
    if layered:
        sub.set_defaults(**layered)


# -- corpus directory layout --------------------------------------------------

def _corpus_paths(root: Path) -> dict:
    return {
        "train": root / "train.otfr",
        "train_labels": root / "train.labels.tsv",
        "test": root / "test.otfr",
        "test_labels": root / "test.labels.tsv",
        "negatives": root / "negatives.otfr",
        "classes": root / "corpus",
    }


def _load_corpus(root_str: str) -> dict:
    root = Path(root_str)
    paths = _corpus_paths(root)
    for key in ("train", "train_labels", "test", "test_labels", "negatives"):
        if not paths[key].exists():
            raise ConfigError(f"corpus directory {root} is missing {paths[key].name}")
    train = load_features(paths["train"])
    test = load_features(paths["test"])
    return {
        "train": train,
        "train_labels": load_labels(paths["train_labels"], store=train),
        "test": test,
        "test_labels": load_labels(paths["test_labels"], store=test),
        "negatives": load_features(paths["negatives"]),
        "classes_dir": paths["classes"],
    }


def _build_repository(store: FeatureStore, args) -> Repository:
    if args.representation == "dense":
        return Repository.dense(store)
    if args.representation == "pq":
        book = learn_pq_codebook(
            store,
            PQConfig(subdim=args.subdim, num_centroids=args.centroids,
                     iterations=args.pq_iterations, seed=args.seed),
        )
        codes = pq_encode(book, store.data)
        return Repository.quantized(book, codes, ids=store.ids, names=store.names)
    frame = make_tight_frame(store.dim, args.bits, seed=args.seed)
    codec = BinaryCodec(frame, store.data.mean(axis=0))
    codes = binarize_store(codec, store)
    return Repository.binary(codec, codes, ids=store.ids, names=store.names)


# -- command handlers ---------------------------------------------------------

def cmd_gen_synth(args) -> int:
    cfg = SynthConfig(
        dim=args.dim, classes=args.classes, per_class=args.per_class,
        distractors=args.distractors, cluster_spread=args.cluster_spread,
        center_spread=args.center_spread, seed=args.seed,
    )
    bundle = generate_corpus_bundle(cfg, train_per_class=args.train_per_class,
                                    negative_count=args.negatives)
    root = Path(args.out)
    root.mkdir(parents=True, exist_ok=True)
    paths = _corpus_paths(root)
    write_features(bundle.train, paths["train"])
    write_labels(bundle.train_labels, paths["train_labels"])
    write_features(bundle.test, paths["test"])
    write_labels(bundle.test_labels, paths["test_labels"])
    write_features(bundle.negatives, paths["negatives"])
    paths["classes"].mkdir(exist_ok=True)
    for name in bundle.train_labels.class_names():
        ids = sorted(bundle.train_labels.ids_for(name))
        rows = np.array([bundle.train.row_of_id(int(i)) for i in ids], dtype=np.int64)
        write_features(bundle.train.subset(rows), paths["classes"] / f"{name}.otfr")
    print(f"wrote corpus to {root}")
    print(f"  train {bundle.train.count} x {bundle.train.dim}")
    print(f"  test {bundle.test.count} x {bundle.test.dim}")
    print(f"  negatives {bundle.negatives.count} x {bundle.negatives.dim}")
    print(f"  classes {', '.join(bundle.train_labels.class_names())}")
    return 0


def cmd_learn_pq(args) -> int:
    store = load_features(args.features, normalize=not args.raw)
    book = learn_pq_codebook(
        store,
        PQConfig(subdim=args.subdim, num_centroids=args.centroids,
                 iterations=args.iterations, seed=args.seed),
    )
    write_codebook(book, args.out)
    final = sum(history[-1] for history in book.objective_history if history)
    print(f"wrote codebook to {args.out}")
    print(f"  blocks {book.num_blocks}, centroids {book.num_centroids}, final objective {final:.6f}")
    return 0


def cmd_encode(args) -> int:
    book = load_codebook(args.codebook)
    store = load_features(args.features, normalize=not args.raw)
    codes = pq_encode(book, store.data)
    write_pq_codes(codes, args.out)
    print(f"wrote {codes.shape[0]} codes of {codes.shape[1]} bytes to {args.out}")
    return 0


def cmd_binarize(args) -> int:
    store = load_features(args.features, normalize=not args.raw)
    frame = make_tight_frame(store.dim, args.bits, seed=args.seed)
    if args.codebook is not None:
        centering = load_codebook(args.codebook).centering
    else:
        centering = store.data.mean(axis=0)
    codec = BinaryCodec(frame, centering)
    codes = binarize_store(codec, store)
    frame_path = args.frame_out or str(Path(args.out).with_suffix(".otfb"))
    write_frame(frame, frame_path)
    write_binary_codes(codes, frame.output_bits, args.out)
    print(f"wrote frame to {frame_path}")
    print(f"wrote {codes.shape[0]} codes of {codes.shape[1]} bytes to {args.out}")
    return 0


def cmd_train_batch(args) -> int:
    positives = load_features(args.positives)
    negatives = load_features(args.negatives)
    model = train_batch(
        positives.data, negatives.data,
        BatchTrainConfig(c=args.c, batch_size=args.batch_size, epochs=args.epochs, seed=args.seed),
    )
    write_model(model, args.out)
    norm = float(np.linalg.norm(model.weights))
    print(f"wrote model to {args.out}")
    print(f"  dim {model.dim}, iterations {model.iteration}, norm {norm:.6f}")
    return 0


def _scenario_config(args) -> ScenarioConfig:
    if args.mode == "batch":
        return ScenarioConfig(
            k=args.k,
            batch=BatchTrainConfig(c=args.c, batch_size=args.batch_size,
                                   epochs=args.epochs, seed=args.seed),
        )
    return ScenarioConfig(
        k=args.k,
        stream=StreamConfig(
            rate=args.rate, duration=args.duration,
            trainer=TrainerConfig(lam=args.lam, batch_size=args.batch_size, seed=args.seed),
        ),
    )


def cmd_evaluate(args) -> int:
    corpus = _load_corpus(args.corpus)
    repo = _build_repository(corpus["test"], args)
    report = run_scenario(
        corpus["train"], corpus["train_labels"], repo, corpus["test_labels"],
        _scenario_config(args), negatives=corpus["negatives"],
    )
    write_scenario_tsv(report, args.out_tsv)
    write_scenario_json(report, args.out_json)
    for r in report.results:
        shown = "undefined" if r.precision is None else f"{r.precision:.4f}"
        print(f"{r.name}  precision@{report.k} {shown}  train {r.train_time_s:.3f}s  rank {r.rank_time_s:.4f}s")
    mean = "undefined" if report.mean_precision is None else f"{report.mean_precision:.4f}"
    print(f"mean precision@{report.k} {mean} over {report.repository_count} vectors ({report.representation})")
    print(f"wrote {args.out_tsv} and {args.out_json}")
    return 0


def cmd_convergence(args) -> int:
    corpus = _load_corpus(args.corpus)
    repo = _build_repository(corpus["test"], args)
    cfg = ScenarioConfig(
        k=args.k,
        stream=StreamConfig(
            rate=args.rate, duration=args.duration,
            trainer=TrainerConfig(lam=args.lam, batch_size=args.batch_size, seed=args.seed),
            steps_per_second=args.steps_per_second, interval=args.interval,
        ),
    )
    trace = run_convergence(
        corpus["train"], corpus["train_labels"], repo, corpus["test_labels"],
        args.class_name, cfg,
    )
    write_trace_tsv(trace, args.out)
    final = trace.final_precision
    shown = "undefined" if final is None else f"{final:.4f}"
    print(f"{len(trace.entries)} publications over {args.duration}s, final precision@{args.k} {shown}")
    print(f"wrote {args.out}")
    return 0


def _build_serve_service(args):
    from .service import RetrievalService, ServiceConfig
    from .session import CorpusSource

    corpus = _load_corpus(args.corpus)
    repo = _build_repository(corpus["test"], args)
    source = CorpusSource(corpus["classes_dir"])
    service = RetrievalService(
        repo, corpus["negatives"], source,
        ServiceConfig(
            rate=args.rate, k=args.k, interval=args.interval,
            trainer=TrainerConfig(lam=args.lam, batch_size=args.batch_size),
            steps_per_second=args.steps_per_second,
            max_sessions=args.max_sessions, seed=args.seed,
        ),
    )
    return service


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    service = _build_serve_service(args)
    app = create_app(service, ui_dir=args.ui)
    health = service.health()
    print(f"serving {health['repository_count']} vectors "
          f"({health['representation']}, dim {health['dim']}) on {args.host}:{args.port}")
    try:
        uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    finally:
        service.shutdown()
    return 0


def cmd_bench_rank(args) -> int:
    store = load_features(args.features)
    repo = _build_repository(store, args)
    rng = np.random.default_rng(args.seed)
    from .model import LinearModel

    times = []
    for i in range(args.repeats):
        model = LinearModel(rng.normal(size=repo.model_dim), iteration=1, version=i + 1)
        began = time.perf_counter()
        scores = repo.score(model.weights)
        top_k(scores, args.k, ids=repo.ids)
        times.append(time.perf_counter() - began)
    best = min(times)
    print(f"{repo.count} vectors ({repo.kind}), k={args.k}, repeats={args.repeats}")
    print(f"best {best * 1000:.2f} ms per list, {repo.count / best:,.0f} vectors/s")
    return 0


HANDLERS = {
    "gen-synth": cmd_gen_synth,
    "learn-pq": cmd_learn_pq,
    "encode": cmd_encode,
    "binarize": cmd_binarize,
    "train-batch": cmd_train_batch,
    "evaluate": cmd_evaluate,
    "convergence": cmd_convergence,
    "serve": cmd_serve,
    "bench-rank": cmd_bench_rank,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser, registry = build_parser()
    args_first = parser.parse_args(argv)
    try:
        _apply_layered_defaults(args_first, registry[args_first.command])
        args = parser.parse_args(argv)
        return HANDLERS[args.command](args)
    except RetrievalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
