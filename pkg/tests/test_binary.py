"""Tight frame, binarization, bit packing and Hamming distance tests."""

import struct

import numpy as np
import pytest

from otf_retrieval.errors import ConfigError, CorruptionError, FormatError
from otf_retrieval.binary import (
    BinaryCodec,
    TightFrame,
    binarize,
    binarize_store,
    hamming_distance,
    load_binary_codes,
    load_frame,
    make_tight_frame,
    unpack_bits,
    validate_padding,
    write_binary_codes,
    write_frame,
)
from otf_retrieval.store import FeatureStore


def popcount_oracle(a: bytes, b: bytes) -> int:
    """Pure-python Hamming distance between two equal-length byte strings."""
    return sum(bin(x ^ y).count("1") for x, y in zip(a, b))


class TestTightFrame:
    def test_square_frame_is_orthogonal(self):
        frame = make_tight_frame(16, 16, seed=1)
        eye = np.eye(16)
        np.testing.assert_allclose(frame.matrix.T @ frame.matrix, eye, atol=1e-10)
        np.testing.assert_allclose(frame.matrix @ frame.matrix.T, eye, atol=1e-10)

    def test_columns_orthonormal_when_tall(self):
        frame = make_tight_frame(8, 64, seed=2)
        np.testing.assert_allclose(frame.matrix.T @ frame.matrix, np.eye(8), atol=1e-10)

    @pytest.mark.parametrize("bits", [1024, 2048])
    def test_projection_preserves_norms(self, bits):
        """Projecting through the frame must not change vector length."""
        frame = make_tight_frame(128, bits, seed=3)
        rng = np.random.default_rng(9)
        vecs = rng.standard_normal((100, 128))
        before = np.linalg.norm(vecs, axis=1)
        after = np.linalg.norm(vecs @ frame.matrix.T, axis=1)
        np.testing.assert_allclose(after, before, rtol=1e-10)

    def test_deterministic_for_seed(self):
        a = make_tight_frame(8, 32, seed=5)
        b = make_tight_frame(8, 32, seed=5)
        c = make_tight_frame(8, 32, seed=6)
        assert a.matrix.tobytes() == b.matrix.tobytes()
        assert a.matrix.tobytes() != c.matrix.tobytes()

    def test_shape_and_helpers(self):
        frame = make_tight_frame(12, 50, seed=0)
        assert frame.matrix.shape == (50, 12)
        assert frame.input_dim == 12
        assert frame.output_bits == 50
        assert frame.code_bytes == 7

    def test_too_few_output_bits_rejected(self):
        with pytest.raises(ConfigError):
            make_tight_frame(16, 8)

    def test_matrix_read_only(self):
        frame = make_tight_frame(4, 8, seed=0)
        with pytest.raises(ValueError):
            frame.matrix[0, 0] = 1.0


class TestBinarize:
    def make_codec(self, m=8, n=16, seed=4) -> BinaryCodec:
        rng = np.random.default_rng(seed)
        center = rng.standard_normal(m).astype(np.float32)
        return BinaryCodec(make_tight_frame(m, n, seed=seed), center)

    def test_centering_vector_maps_to_zero_code(self):
        """The centering vector itself projects to exactly zero, so all bits are 0."""
        codec = self.make_codec()
        code = binarize(codec, codec.centering)
        assert code.shape == (2,)
        np.testing.assert_array_equal(code, 0)

    def test_matches_explicit_sign_oracle(self):
        codec = self.make_codec(m=4, n=8, seed=7)
        rng = np.random.default_rng(17)
        vecs = rng.standard_normal((30, 4)).astype(np.float32)
        codes = binarize(codec, vecs)
        for i, v in enumerate(vecs.astype(np.float64)):
            projected = codec.frame.matrix @ (v - codec.centering.astype(np.float64))
            for j in range(8):
                expected = 1 if projected[j] > 0.0 else 0
                got = (codes[i, j // 8] >> (j % 8)) & 1
                assert got == expected, f"vector {i} bit {j}"

    def test_scale_about_center_leaves_code_unchanged(self):
        """Positive scaling of the centered vector cannot flip any sign."""
        codec = self.make_codec()
        rng = np.random.default_rng(23)
        v = rng.standard_normal(8)
        center = codec.centering.astype(np.float64)
        base = binarize(codec, v)
        np.testing.assert_array_equal(binarize(codec, center + 3.0 * (v - center)), base)
        np.testing.assert_array_equal(binarize(codec, center + 0.01 * (v - center)), base)

    def test_batch_shape_and_padding(self):
        codec = self.make_codec(m=4, n=13, seed=1)
        rng = np.random.default_rng(2)
        codes = binarize(codec, rng.standard_normal((20, 4)))
        assert codes.shape == (20, 2)
        validate_padding(codes, 13)

    def test_chunked_matches_unchunked(self):
        codec = self.make_codec()
        rng = np.random.default_rng(31)
        vecs = rng.standard_normal((100, 8))
        np.testing.assert_array_equal(binarize(codec, vecs, chunk_rows=7), binarize(codec, vecs))

    def test_dim_mismatch_rejected(self):
        codec = self.make_codec()
        with pytest.raises(ConfigError):
            binarize(codec, np.ones(9))

    def test_binarize_store(self):
        codec = self.make_codec()
        rng = np.random.default_rng(5)
        store = FeatureStore(rng.standard_normal((10, 8)).astype(np.float32))
        np.testing.assert_array_equal(binarize_store(codec, store), binarize(codec, store.data))


class TestBitPacking:
    def test_known_pattern_packs_lsb_first(self):
        """Bit j lives at position j % 8 of byte j // 8."""
        frame = make_tight_frame(1, 9, seed=0)
        # bypass projection: check unpack against hand-packed bytes instead
        packed = np.array([[0b00000001, 0b00000001]], dtype=np.uint8)
        bits = unpack_bits(packed, 9)
        expected = np.zeros(9, dtype=np.float32)
        expected[0] = 1.0
        expected[8] = 1.0
        np.testing.assert_array_equal(bits[0], expected)
        assert frame.code_bytes == 2

    def test_unpack_values_are_zero_one_float32(self):
        codec = BinaryCodec(make_tight_frame(4, 8, seed=3), np.zeros(4, dtype=np.float32))
        rng = np.random.default_rng(3)
        codes = binarize(codec, rng.standard_normal((40, 4)))
        bits = unpack_bits(codes, 8)
        assert bits.dtype == np.float32
        assert set(np.unique(bits)) <= {0.0, 1.0}

    def test_unpack_round_trip(self):
        rng = np.random.default_rng(8)
        bits = (rng.random((25, 11)) > 0.5).astype(np.uint8)
        packed = np.packbits(bits, axis=1, bitorder="little")
        np.testing.assert_array_equal(unpack_bits(packed, 11), bits.astype(np.float32))

    def test_padding_validation(self):
        bad = np.array([[0xFF, 0xFF]], dtype=np.uint8)
        with pytest.raises(CorruptionError):
            validate_padding(bad, 13)
        validate_padding(bad, 16)


class TestHamming:
    def test_self_distance_zero(self):
        rng = np.random.default_rng(1)
        codes = rng.integers(0, 256, size=(10, 4)).astype(np.uint8)
        np.testing.assert_array_equal(hamming_distance(codes, codes), 0)

    def test_complement_distance_is_bit_count(self):
        codes = np.zeros((3, 4), dtype=np.uint8)
        np.testing.assert_array_equal(hamming_distance(codes, ~codes), 32)

    def test_matches_popcount_oracle(self):
        rng = np.random.default_rng(44)
        a = rng.integers(0, 256, size=(20, 6)).astype(np.uint8)
        b = rng.integers(0, 256, size=(20, 6)).astype(np.uint8)
        got = hamming_distance(a, b)
        for i in range(20):
            assert got[i] == popcount_oracle(a[i].tobytes(), b[i].tobytes())


class TestFrameFile:
    def test_round_trip_regenerates_same_matrix(self, tmp_path):
        frame = make_tight_frame(16, 64, seed=99)
        path = tmp_path / "frame.otfb"
        write_frame(frame, path)
        back = load_frame(path)
        assert back.matrix.tobytes() == frame.matrix.tobytes()
        assert back.seed == 99

    def test_byte_layout(self, tmp_path):
        path = tmp_path / "frame.otfb"
        write_frame(make_tight_frame(16, 64, seed=7), path)
        expected = b"OTFB" + struct.pack("<I", 1) + struct.pack("<II", 16, 64) + struct.pack("<Q", 7)
        assert path.read_bytes() == expected
        assert path.stat().st_size == 24

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "frame.otfb"
        path.write_bytes(b"ZZZZ" + struct.pack("<I", 1) + struct.pack("<IIQ", 4, 8, 0))
        with pytest.raises(FormatError):
            load_frame(path)


class TestBinaryCodesFile:
    def test_round_trip_and_size(self, tmp_path):
        codec = BinaryCodec(make_tight_frame(8, 19, seed=2), np.zeros(8, dtype=np.float32))
        rng = np.random.default_rng(6)
        codes = binarize(codec, rng.standard_normal((15, 8)))
        path = tmp_path / "codes.otfh"
        write_binary_codes(codes, 19, path)
        assert path.stat().st_size == 20 + 15 * 3
        back, bits = load_binary_codes(path)
        assert bits == 19
        np.testing.assert_array_equal(back, codes)

    def test_nonzero_padding_rejected_on_load(self, tmp_path):
        path = tmp_path / "codes.otfh"
        payload = b"OTFH" + struct.pack("<I", 1) + struct.pack("<Q", 1) + struct.pack("<I", 13) + bytes([0x00, 0xFF])
        path.write_bytes(payload)
        with pytest.raises(CorruptionError):
            load_binary_codes(path)

    def test_truncated(self, tmp_path):
        codec = BinaryCodec(make_tight_frame(4, 8, seed=1), np.zeros(4, dtype=np.float32))
        codes = binarize(codec, np.random.default_rng(0).standard_normal((5, 4)))
        path = tmp_path / "codes.otfh"
        write_binary_codes(codes, 8, path)
        path.write_bytes(path.read_bytes()[:-2])
        with pytest.raises(CorruptionError):
            load_binary_codes(path)
