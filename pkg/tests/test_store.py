"""Feature store, normalization, disk format and synthetic corpus tests."""

import struct

import numpy as np
import pytest

from otf_retrieval.errors import (
    ConfigError,
    CorruptionError,
    DegenerateInputError,
    EmptyStoreError,
    FormatError,
)
from otf_retrieval.store import (
    CorpusBundle,
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


def make_feature_bytes(data: np.ndarray) -> bytes:
    """Independent byte-level oracle for the OTFR layout."""
    count, dim = data.shape
    header = b"OTFR" + struct.pack("<I", 1) + struct.pack("<I", dim) + struct.pack("<Q", count)
    return header + data.astype("<f4").tobytes()


class TestNormalizeRows:
    def test_hand_computed_values(self):
        """A 3-4-5 triangle normalizes to (0.6, 0.8)."""
        out = normalize_rows(np.array([[3.0, 4.0]]))
        np.testing.assert_allclose(out, [[0.6, 0.8]], atol=1e-7)

    def test_unit_norm_within_tolerance(self):
        rng = np.random.default_rng(7)
        out = normalize_rows(rng.standard_normal((100, 32)))
        np.testing.assert_allclose(np.linalg.norm(out.astype(np.float64), axis=1), 1.0, atol=1e-6)

    def test_idempotent(self):
        """Normalizing an already normalized batch changes nothing measurable."""
        rng = np.random.default_rng(11)
        once = normalize_rows(rng.standard_normal((100, 16)))
        twice = normalize_rows(once)
        np.testing.assert_allclose(twice, once, atol=1e-6)

    def test_zero_vector_rejected(self):
        with pytest.raises(DegenerateInputError):
            normalize_rows(np.array([[1.0, 0.0], [0.0, 0.0]]))

    def test_single_vector_shape(self):
        out = normalize_rows(np.array([0.0, 5.0]))
        assert out.shape == (2,)
        np.testing.assert_allclose(out, [0.0, 1.0])

    def test_output_is_float32(self):
        assert normalize_rows(np.ones((2, 3), dtype=np.float64)).dtype == np.float32


class TestFeatureStore:
    def test_default_ids_are_row_positions(self):
        store = FeatureStore(np.ones((5, 3), dtype=np.float32))
        np.testing.assert_array_equal(store.ids, np.arange(5))

    def test_data_is_read_only(self):
        store = FeatureStore(np.ones((2, 2), dtype=np.float32))
        with pytest.raises(ValueError):
            store.data[0, 0] = 7.0

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ConfigError):
            FeatureStore(np.ones((2, 2)), ids=np.array([3, 3]))

    def test_empty_rejected(self):
        with pytest.raises(EmptyStoreError):
            FeatureStore(np.zeros((0, 4), dtype=np.float32))
        with pytest.raises(EmptyStoreError):
            FeatureStore(np.zeros((4, 0), dtype=np.float32))

    def test_subset_preserves_ids_and_names(self):
        store = FeatureStore(np.eye(4, dtype=np.float32), names=["a", "b", "c", "d"])
        sub = store.subset(np.array([2, 0]))
        np.testing.assert_array_equal(sub.ids, [2, 0])
        assert sub.names == ["c", "a"]
        np.testing.assert_array_equal(sub.data[0], store.data[2])

    def test_without_ids_drops_rows(self):
        store = FeatureStore(np.eye(4, dtype=np.float32))
        kept = store.without_ids({1, 3})
        np.testing.assert_array_equal(kept.ids, [0, 2])

    def test_without_ids_everything_raises(self):
        store = FeatureStore(np.eye(2, dtype=np.float32))
        with pytest.raises(EmptyStoreError):
            store.without_ids({0, 1})

    def test_row_of_id_round_trip(self):
        store = FeatureStore(np.eye(3, dtype=np.float32), ids=np.array([10, 20, 30]))
        assert store.row_of_id(20) == 1
        with pytest.raises(KeyError):
            store.row_of_id(99)


class TestFeatureFile:
    def test_header_fields_echoed(self, tmp_path):
        """dim and count land in the header exactly as written."""
        rng = np.random.default_rng(3)
        data = rng.standard_normal((2, 128)).astype(np.float32)
        path = tmp_path / "f.otfr"
        path.write_bytes(make_feature_bytes(data))
        store = load_features(path, normalize=False)
        assert (store.count, store.dim) == (2, 128)
        np.testing.assert_array_equal(store.data, data)

    def test_write_load_write_is_byte_identical(self, tmp_path):
        rng = np.random.default_rng(5)
        data = rng.standard_normal((7, 9)).astype(np.float32)
        first = tmp_path / "a.otfr"
        second = tmp_path / "b.otfr"
        write_features(FeatureStore(data), first)
        assert first.read_bytes() == make_feature_bytes(data)
        write_features(load_features(first, normalize=False), second)
        assert second.read_bytes() == first.read_bytes()

    def test_default_load_normalizes(self, tmp_path):
        path = tmp_path / "f.otfr"
        path.write_bytes(make_feature_bytes(np.array([[3.0, 4.0]], dtype=np.float32)))
        store = load_features(path)
        np.testing.assert_allclose(store.data, [[0.6, 0.8]], atol=1e-6)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "f.otfr"
        path.write_bytes(b"NOPE" + make_feature_bytes(np.ones((1, 2), dtype=np.float32))[4:])
        with pytest.raises(FormatError):
            load_features(path)

    def test_bad_version(self, tmp_path):
        raw = bytearray(make_feature_bytes(np.ones((1, 2), dtype=np.float32)))
        raw[4:8] = struct.pack("<I", 9)
        path = tmp_path / "f.otfr"
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError):
            load_features(path)

    def test_truncated_payload(self, tmp_path):
        raw = make_feature_bytes(np.ones((3, 4), dtype=np.float32))
        path = tmp_path / "f.otfr"
        path.write_bytes(raw[:-5])
        with pytest.raises(CorruptionError):
            load_features(path)

    def test_trailing_bytes(self, tmp_path):
        raw = make_feature_bytes(np.ones((3, 4), dtype=np.float32))
        path = tmp_path / "f.otfr"
        path.write_bytes(raw + b"x")
        with pytest.raises(CorruptionError):
            load_features(path)

    def test_empty_count_rejected(self, tmp_path):
        header = b"OTFR" + struct.pack("<I", 1) + struct.pack("<I", 8) + struct.pack("<Q", 0)
        path = tmp_path / "f.otfr"
        path.write_bytes(header)
        with pytest.raises(EmptyStoreError):
            load_features(path)

    def test_names_sidecar_round_trip(self, tmp_path):
        store = FeatureStore(np.eye(3, dtype=np.float32), names=["x", "y", "z"])
        path = tmp_path / "f.otfr"
        write_features(store, path)
        assert load_features(path).names == ["x", "y", "z"]


class TestLabelSidecar:
    def test_round_trip(self, tmp_path):
        labels = LabelSet({"cat": frozenset({0, 2}), "dog": frozenset({1})})
        path = tmp_path / "labels.tsv"
        write_labels(labels, path)
        back = load_labels(path)
        assert back.ids_for("cat") == frozenset({0, 2})
        assert back.ids_for("dog") == frozenset({1})
        assert back.class_names() == ["cat", "dog"]

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "labels.tsv"
        path.write_text("cat\tnotanumber\n")
        with pytest.raises(CorruptionError):
            load_labels(path)

    def test_unknown_id_validation(self, tmp_path):
        path = tmp_path / "labels.tsv"
        path.write_text("cat\t5\n")
        store = FeatureStore(np.eye(2, dtype=np.float32))
        with pytest.raises(CorruptionError):
            load_labels(path, store=store)


class TestSyntheticCorpus:
    def test_row_counts_and_label_partition(self):
        cfg = SynthConfig(dim=16, classes=3, per_class=5, distractors=7, seed=1)
        store, labels = generate_synthetic(cfg)
        assert store.count == 3 * 5 + 7
        assert store.dim == 16
        all_labeled = set()
        for name in labels.class_names():
            members = labels.ids_for(name)
            assert len(members) == 5
            assert not (members & all_labeled)
            all_labeled |= members
        assert all_labeled == set(range(15))

    def test_rows_are_unit_norm(self):
        store, _ = generate_synthetic(SynthConfig(dim=8, classes=2, per_class=4, distractors=4, seed=2))
        np.testing.assert_allclose(np.linalg.norm(store.data.astype(np.float64), axis=1), 1.0, atol=1e-6)

    def test_same_seed_bitwise_identical(self):
        cfg = SynthConfig(dim=12, classes=2, per_class=3, distractors=5, seed=42)
        a, _ = generate_synthetic(cfg)
        b, _ = generate_synthetic(cfg)
        assert a.data.tobytes() == b.data.tobytes()

    def test_different_seed_differs(self):
        a, _ = generate_synthetic(SynthConfig(dim=12, classes=2, per_class=3, distractors=5, seed=1))
        b, _ = generate_synthetic(SynthConfig(dim=12, classes=2, per_class=3, distractors=5, seed=2))
        assert a.data.tobytes() != b.data.tobytes()

    def test_zero_cluster_spread_collapses_class(self):
        """With no within-class scatter every member equals the normalized center."""
        store, labels = generate_synthetic(
            SynthConfig(dim=10, classes=2, per_class=4, distractors=0, cluster_spread=0.0, seed=3)
        )
        for name in labels.class_names():
            rows = sorted(labels.ids_for(name))
            block = store.data[rows]
            assert np.all(block == block[0])

    def test_invalid_config_rejected(self):
        with pytest.raises(ConfigError):
            generate_synthetic(SynthConfig(dim=0, classes=1, per_class=1, distractors=0))
        with pytest.raises(ConfigError):
            generate_synthetic(SynthConfig(dim=4, classes=1, per_class=1, distractors=0, center_spread=0.0))
        with pytest.raises(ConfigError):
            generate_synthetic(SynthConfig(dim=4, classes=1, per_class=1, distractors=0, cluster_spread=-0.5))

    def test_names_follow_class_then_background(self):
        store, _ = generate_synthetic(SynthConfig(dim=4, classes=1, per_class=2, distractors=1, seed=0))
        assert store.names == ["class_00-0000", "class_00-0001", "bg-000000"]


class TestCorpusBundle:
    def make(self, seed=9) -> CorpusBundle:
        cfg = SynthConfig(dim=16, classes=2, per_class=6, distractors=10, seed=seed)
        return generate_corpus_bundle(cfg, train_per_class=4, negative_count=20)

    def test_shapes(self):
        bundle = self.make()
        assert bundle.train.count == 2 * 4
        assert bundle.test.count == 2 * 6 + 10
        assert bundle.negatives.count == 20
        assert bundle.train.dim == bundle.test.dim == bundle.negatives.dim == 16

    def test_train_and_test_draws_are_disjoint(self):
        """Same centers, fresh noise: no feature row appears on both sides."""
        bundle = self.make()
        train_rows = {r.tobytes() for r in bundle.train.data}
        test_rows = {r.tobytes() for r in bundle.test.data}
        assert not (train_rows & test_rows)

    def test_deterministic(self):
        a, b = self.make(5), self.make(5)
        assert a.train.data.tobytes() == b.train.data.tobytes()
        assert a.test.data.tobytes() == b.test.data.tobytes()
        assert a.negatives.data.tobytes() == b.negatives.data.tobytes()

    def test_label_alignment(self):
        bundle = self.make()
        bundle.train_labels.validate_against(bundle.train)
        bundle.test_labels.validate_against(bundle.test)
        assert bundle.train_labels.class_names() == bundle.test_labels.class_names()
