"""Randomness extraction pipeline: parity bits, whitening, audits."""
import itertools
import math

import numpy as np
import pytest
from scipy import stats

from bellkit import rngstream
from bellkit.randomness import (
    BitStream,
    block8,
    combine_streams,
    estimate_bias,
    extract_bits,
    independence_test,
    message_to_bit,
    read_bits,
    read_messages,
    write_bits,
    xor_combine,
)


def popcount_parity_oracle(text):
    return sum(bin(ord(ch)).count("1") for ch in text) % 2


class TestMessageToBit:
    def test_known_characters(self):
        # U+0041 has two ones, U+0061 has three.
        assert message_to_bit("A") == 0
        assert message_to_bit("a") == 1

    def test_empty_message_warns_and_returns_zero(self):
        with pytest.warns(UserWarning):
            assert message_to_bit("") == 0

    def test_matches_oracle_on_mixed_unicode(self):
        samples = ["hello world", "Message #42!", "éèê", "\U0001f600\U0001f680", "0" * 140]
        for text in samples:
            assert message_to_bit(text) == popcount_parity_oracle(text)

    def test_reordering_invariance(self):
        rng = np.random.default_rng(0)
        text = "parity is commutative #2016"
        for _ in range(10):
            shuffled = "".join(rng.permutation(list(text)))
            assert message_to_bit(shuffled) == message_to_bit(text)

    def test_length_cap(self):
        message_to_bit("x" * 140)
        with pytest.raises(ValueError):
            message_to_bit("x" * 141)
        message_to_bit("x" * 200, max_chars=280)


class TestBlock8:
    def test_sixteen_zeros(self):
        assert block8(BitStream(bits=(0,) * 16)).bits == (0, 0)

    def test_eight_ones_even_parity(self):
        assert block8(BitStream(bits=(1,) * 8)).bits == (0,)

    def test_remainder_dropped(self):
        stream = BitStream(bits=(1, 0, 0, 0, 0, 0, 0, 0) + (1, 1, 1))
        assert block8(stream).bits == (1,)

    def test_dataset_sizes(self):
        # 139952 = 17494 * 8 exactly; 134501 leaves a 5-bit remainder.
        assert len(block8(BitStream(bits=(0,) * 139952))) == 17494
        assert len(block8(BitStream(bits=(0,) * 134501))) == 16812

    def test_too_short(self):
        with pytest.raises(ValueError):
            block8(BitStream(bits=(0,) * 7))

    def test_xor_with_zero_stream_is_identity(self):
        rng = rngstream.stream(1)
        bits = tuple(int(b) for b in rng.integers(0, 2, size=160))
        base = block8(BitStream(bits=bits))
        padded = tuple(b ^ 0 for b in bits)
        assert block8(BitStream(bits=padded)).bits == base.bits

    def test_blockwise_parity_oracle(self):
        rng = rngstream.stream(2)
        bits = tuple(int(b) for b in rng.integers(0, 2, size=83))
        got = block8(BitStream(bits=bits)).bits
        want = tuple(sum(bits[8 * j : 8 * j + 8]) % 2 for j in range(len(bits) // 8))
        assert got == want


class TestEstimateBias:
    def test_all_zeros(self):
        est = estimate_bias(BitStream(bits=(0, 0, 0, 0)))
        assert est.bias == 0.5 and est.uncertainty == 0.25

    def test_balanced(self):
        est = estimate_bias(BitStream(bits=(0, 1, 0, 1)))
        assert est.bias == 0.0 and est.uncertainty == 0.25

    def test_dataset_b_uncertainty(self):
        est = estimate_bias(BitStream(bits=(0, 1) * 8406))
        assert est.n == 16812
        assert est.uncertainty == pytest.approx(0.003856, abs=5e-6)
        assert round(est.uncertainty, 4) == 0.0039

    def test_uncertainty_halves_when_n_quadruples(self):
        small = estimate_bias(BitStream(bits=(0, 1) * 50))
        large = estimate_bias(BitStream(bits=(0, 1) * 200))
        assert large.uncertainty == pytest.approx(small.uncertainty / 2, rel=1e-12)

    def test_empty_errors(self):
        with pytest.raises(ValueError):
            estimate_bias(BitStream(bits=()))


class TestXorCombine:
    def test_all_zero(self):
        assert xor_combine([0] * 8, 0) == 0

    def test_single_one(self):
        assert xor_combine([1, 0, 0, 0, 0, 0, 0, 0], 0) == 1
        assert xor_combine([0] * 8, 1) == 1

    def test_exhaustive_512_against_parity(self):
        for bits in itertools.product((0, 1), repeat=9):
            assert xor_combine(list(bits[:8]), bits[8]) == sum(bits) % 2

    def test_quantum_bit_always_flips(self):
        rng = rngstream.stream(3)
        for _ in range(50):
            classical = [int(b) for b in rng.integers(0, 2, size=8)]
            assert xor_combine(classical, 0) ^ xor_combine(classical, 1) == 1

    def test_arity_errors(self):
        with pytest.raises(ValueError):
            xor_combine([0] * 7, 0)
        with pytest.raises(ValueError):
            xor_combine([0] * 9, 0)
        with pytest.raises(ValueError):
            xor_combine([0] * 8, 2)

    def test_randomized_bulk_against_reference(self):
        rng = rngstream.stream(4)
        blocks = rng.integers(0, 2, size=(100_000, 9))
        want = blocks.sum(axis=1) % 2
        got = np.bitwise_xor.reduce(blocks, axis=1)
        mismatches = int(np.sum(got != want))
        assert mismatches == 0


class TestCombineStreams:
    def test_blockwise(self):
        classical = BitStream(bits=(1, 0, 0, 0, 0, 0, 0, 0, 1, 1, 0, 0, 0, 0, 0, 0))
        quantum = BitStream(bits=(0, 1))
        assert combine_streams(classical, quantum).bits == (1, 1)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            combine_streams(BitStream(bits=(0,) * 9), BitStream(bits=(0,)))


class TestIndependence:
    def test_identical_streams_detected(self):
        rng = rngstream.stream(5)
        bits = tuple(int(b) for b in rng.integers(0, 2, size=2000))
        stream = BitStream(bits=bits)
        assert independence_test(stream, stream) < 1e-100

    def test_balanced_table_is_one(self):
        a = BitStream(bits=(0,) * 5 + (0,) * 5 + (1,) * 5 + (1,) * 5)
        b = BitStream(bits=(0,) * 5 + (1,) * 5 + (0,) * 5 + (1,) * 5)
        assert independence_test(a, b) == 1.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            independence_test(BitStream(bits=(0, 1)), BitStream(bits=(0,)))

    def test_calibration_under_independence(self):
        # Independent fair streams: the P-value distribution should be close
        # to uniform. Kolmogorov-Smirnov on 200 replicates.
        rng = rngstream.stream(6)
        pvals = []
        for _ in range(200):
            a = BitStream(bits=tuple(int(x) for x in rng.integers(0, 2, size=20_000)))
            b = BitStream(bits=tuple(int(x) for x in rng.integers(0, 2, size=20_000)))
            pvals.append(independence_test(a, b))
        ks = stats.kstest(pvals, "uniform")
        assert ks.pvalue > 1e-3


class TestFileRoundtrip:
    def test_ascii_and_packed(self, tmp_path):
        rng = rngstream.stream(7)
        stream = BitStream(bits=tuple(int(b) for b in rng.integers(0, 2, size=101)))
        ascii_path = str(tmp_path / "bits.txt")
        packed_path = str(tmp_path / "bits.bin")
        write_bits(ascii_path, stream)
        write_bits(packed_path, stream, packed=True)
        assert read_bits(ascii_path).bits == stream.bits
        assert read_bits(packed_path, packed=True).bits == stream.bits

    def test_messages_preserve_trailing_spaces(self, tmp_path):
        path = tmp_path / "messages.txt"
        path.write_text("hello \nworld\n", encoding="utf-8")
        assert read_messages(str(path)) == ["hello ", "world"]

    def test_extract_bits_pipeline(self):
        stream = extract_bits(["A", "a", "Aa"])
        assert stream.bits == (0, 1, 1)
