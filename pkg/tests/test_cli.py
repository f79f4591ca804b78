"""CLI tests: every subcommand end to end plus option layering rules."""

import json
import subprocess
import sys

import numpy as np
import pytest

from otf_retrieval.binary import BinaryCodec, binarize_store, load_binary_codes, load_frame
from otf_retrieval.cli import main
from otf_retrieval.model import load_model
from otf_retrieval.pq import load_codebook, load_pq_codes
from otf_retrieval.store import load_features, load_labels


GEN_ARGS = [
    "--dim", "32", "--classes", "3", "--per-class", "12", "--train-per-class", "20",
    "--distractors", "120", "--negatives", "80", "--cluster-spread", "0.05",
]


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    rc = main(["gen-synth", "--out", str(root), *GEN_ARGS, "--seed", "33"])
    assert rc == 0
    return root


class TestGenSynth:
    def test_writes_expected_layout(self, corpus_dir):
        for name in ("train.otfr", "train.labels.tsv", "test.otfr",
                     "test.labels.tsv", "negatives.otfr"):
            assert (corpus_dir / name).exists()
        train = load_features(corpus_dir / "train.otfr")
        assert train.count == 60 and train.dim == 32
        test = load_features(corpus_dir / "test.otfr")
        assert test.count == 3 * 12 + 120
        labels = load_labels(corpus_dir / "train.labels.tsv", store=train)
        assert labels.class_names() == ["class_00", "class_01", "class_02"]

    def test_writes_per_class_corpus_files(self, corpus_dir):
        files = sorted(p.name for p in (corpus_dir / "corpus").glob("*.otfr"))
        assert files == ["class_00.otfr", "class_01.otfr", "class_02.otfr"]
        one = load_features(corpus_dir / "corpus" / "class_00.otfr")
        assert one.count == 20

    def test_seed_flag_is_deterministic(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["gen-synth", "--out", str(a), *GEN_ARGS, "--seed", "123"]) == 0
        assert main(["gen-synth", "--out", str(b), *GEN_ARGS, "--seed", "123"]) == 0
        assert (a / "train.otfr").read_bytes() == (b / "train.otfr").read_bytes()


class TestCompressionCommands:
    def test_learn_pq_then_encode(self, corpus_dir, tmp_path, capsys):
        book_path = tmp_path / "book.otfq"
        rc = main(["learn-pq", "--features", str(corpus_dir / "train.otfr"),
                   "--out", str(book_path), "--subdim", "4", "--centroids", "16",
                   "--iterations", "8", "--seed", "3"])
        assert rc == 0
        assert "wrote codebook" in capsys.readouterr().out
        book = load_codebook(book_path)
        assert book.num_centroids == 16 and book.num_blocks == 8

        codes_path = tmp_path / "codes.otfc"
        rc = main(["encode", "--features", str(corpus_dir / "test.otfr"),
                   "--codebook", str(book_path), "--out", str(codes_path)])
        assert rc == 0
        codes = load_pq_codes(codes_path)
        assert codes.shape == (156, 8)

    def test_binarize_writes_frame_and_codes(self, corpus_dir, tmp_path):
        out = tmp_path / "codes.otfh"
        rc = main(["binarize", "--features", str(corpus_dir / "test.otfr"),
                   "--out", str(out), "--bits", "64", "--seed", "9"])
        assert rc == 0
        frame = load_frame(tmp_path / "codes.otfb")
        codes, bits = load_binary_codes(out)
        assert bits == 64 and codes.shape == (156, 8)
        store = load_features(corpus_dir / "test.otfr")
        codec = BinaryCodec(frame, store.data.mean(axis=0))
        np.testing.assert_array_equal(codes, binarize_store(codec, store))


class TestTrainBatchCommand:
    def test_model_file_written(self, corpus_dir, tmp_path):
        out = tmp_path / "model.otfm"
        rc = main(["train-batch",
                   "--positives", str(corpus_dir / "corpus" / "class_00.otfr"),
                   "--negatives", str(corpus_dir / "negatives.otfr"),
                   "--out", str(out), "--epochs", "10", "--seed", "4"])
        assert rc == 0
        model = load_model(out)
        assert model.dim == 32 and model.iteration > 0


class TestEvaluateCommand:
    def test_batch_evaluation_reports(self, corpus_dir, tmp_path, capsys):
        tsv = tmp_path / "r.tsv"
        js = tmp_path / "r.json"
        rc = main(["evaluate", "--corpus", str(corpus_dir), "--k", "12",
                   "--epochs", "12", "--out-tsv", str(tsv), "--out-json", str(js),
                   "--seed", "5"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "mean precision@12" in out
        doc = json.loads(js.read_text())
        assert doc["mean_precision"] >= 0.8
        assert tsv.read_text().startswith("class\t")

    def test_pq_representation(self, corpus_dir, tmp_path):
        js = tmp_path / "r.json"
        rc = main(["evaluate", "--corpus", str(corpus_dir), "--k", "12",
                   "--epochs", "12", "--representation", "pq", "--subdim", "4",
                   "--centroids", "16", "--pq-iterations", "5",
                   "--out-tsv", str(tmp_path / "r.tsv"), "--out-json", str(js),
                   "--seed", "5"])
        assert rc == 0
        doc = json.loads(js.read_text())
        assert doc["repository"]["representation"] == "pq"
        assert doc["mean_precision"] >= 0.7

    def test_missing_corpus_fails_cleanly(self, tmp_path, capsys):
        rc = main(["evaluate", "--corpus", str(tmp_path / "nope")])
        assert rc == 1
        assert "error:" in capsys.readouterr().err


class TestConvergenceCommand:
    def test_trace_written(self, corpus_dir, tmp_path, capsys):
        out = tmp_path / "trace.tsv"
        rc = main(["convergence", "--corpus", str(corpus_dir),
                   "--class-name", "class_00", "--k", "12", "--duration", "1.0",
                   "--out", str(out), "--seed", "2"])
        assert rc == 0
        lines = out.read_text().strip().split("\n")
        assert lines[0] == "t_seconds\tpositives_fed\tprecision_at_k"
        assert len(lines) == 1 + 5  # ticks at 0.18j within 1.0 s
        assert "final precision@12" in capsys.readouterr().out


class TestBenchCommand:
    def test_reports_throughput(self, corpus_dir, capsys):
        rc = main(["bench-rank", "--features", str(corpus_dir / "test.otfr"),
                   "--k", "10", "--repeats", "2"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "vectors/s" in out and "ms per list" in out


class TestServeCommand:
    def test_builds_app_and_invokes_server(self, corpus_dir, monkeypatch):
        captured = {}

        def fake_run(app, host, port, log_level):
            captured["app"] = app
            captured["host"] = host
            captured["port"] = port

        import uvicorn

        monkeypatch.setattr(uvicorn, "run", fake_run)
        rc = main(["serve", "--corpus", str(corpus_dir), "--host", "127.0.0.9",
                   "--port", "9911", "--k", "10"])
        assert rc == 0
        assert captured["host"] == "127.0.0.9" and captured["port"] == 9911
        paths = {r.path for r in captured["app"].routes}
        assert "/v1/sessions" in paths and "/v1/health" in paths


class TestOptionLayering:
    def test_config_file_supplies_defaults(self, tmp_path):
        cfg = tmp_path / "opts.cfg"
        cfg.write_text("# corpus generation\nseed=123\ncluster-spread=0.05\n")
        a, b = tmp_path / "a", tmp_path / "b"
        base = [g for g in GEN_ARGS if g not in ("--cluster-spread", "0.05")]
        assert main(["gen-synth", "--out", str(a), *base, "--config", str(cfg)]) == 0
        assert main(["gen-synth", "--out", str(b), *GEN_ARGS, "--seed", "123"]) == 0
        assert (a / "train.otfr").read_bytes() == (b / "train.otfr").read_bytes()

    def test_env_seed_used_when_unset(self, tmp_path, monkeypatch):
        monkeypatch.setenv("OTF_SEED", "123")
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["gen-synth", "--out", str(a), *GEN_ARGS]) == 0
        monkeypatch.delenv("OTF_SEED")
        assert main(["gen-synth", "--out", str(b), *GEN_ARGS, "--seed", "123"]) == 0
        assert (a / "train.otfr").read_bytes() == (b / "train.otfr").read_bytes()

    def test_flag_beats_config_and_env(self, tmp_path, monkeypatch):
        cfg = tmp_path / "opts.cfg"
        cfg.write_text("seed=1\n")
        monkeypatch.setenv("OTF_SEED", "7")
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["gen-synth", "--out", str(a), *GEN_ARGS,
                     "--config", str(cfg), "--seed", "123"]) == 0
        monkeypatch.delenv("OTF_SEED")
        assert main(["gen-synth", "--out", str(b), *GEN_ARGS, "--seed", "123"]) == 0
        assert (a / "train.otfr").read_bytes() == (b / "train.otfr").read_bytes()

    def test_config_beats_env(self, tmp_path, monkeypatch):
        cfg = tmp_path / "opts.cfg"
        cfg.write_text("seed=123\n")
        monkeypatch.setenv("OTF_SEED", "7")
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["gen-synth", "--out", str(a), *GEN_ARGS, "--config", str(cfg)]) == 0
        monkeypatch.delenv("OTF_SEED")
        assert main(["gen-synth", "--out", str(b), *GEN_ARGS, "--seed", "123"]) == 0
        assert (a / "train.otfr").read_bytes() == (b / "train.otfr").read_bytes()

    def test_malformed_config_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "opts.cfg"
        cfg.write_text("seed 123\n")
        rc = main(["gen-synth", "--out", str(tmp_path / "x"), *GEN_ARGS,
                   "--config", str(cfg)])
        assert rc == 1
        assert "key=value" in capsys.readouterr().err


class TestEntryPoints:
    def test_unknown_command_exits_with_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["no-such-command"])
        assert exc.value.code == 2

    def test_module_invocation_reports_version(self):
        proc = subprocess.run(
            [sys.executable, "-m", "otf_retrieval", "--version"],
            capture_output=True, text=True, timeout=60,
        )
        assert proc.returncode == 0
        assert "otf-retrieval" in proc.stdout
