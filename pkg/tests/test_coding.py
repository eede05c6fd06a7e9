import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from molim.coding import (bit_duration, bit_error_rate, bits_to_symbols,
                          gray_encode, symbols_to_bits)


def test_examples():
    assert bits_to_symbols([0, 0, 0], "natural", 8)[0] == 0
    assert bits_to_symbols([0, 0, 0], "gray", 8)[0] == 0
    assert bits_to_symbols([0, 1, 0], "gray", 8)[0] == 3
    assert bits_to_symbols([1, 1, 1], "natural", 8)[0] == 7
    assert list(symbols_to_bits([7], "natural", 8)) == [1, 1, 1]
    assert list(symbols_to_bits([3], "gray", 8)) == [0, 1, 0]


def test_round_trip_all_symbols():
    symbols = np.arange(8)
    for scheme in ("natural", "gray"):
        bits = symbols_to_bits(symbols, scheme, 8)
        assert np.array_equal(bits_to_symbols(bits, scheme, 8), symbols)


def test_both_schemes_are_bijections():
    for scheme in ("natural", "gray"):
        seen = {tuple(symbols_to_bits([s], scheme, 8)) for s in range(8)}
        assert len(seen) == 8


def test_gray_adjacency():
    for i in range(7):
        diff = gray_encode(i) ^ gray_encode(i + 1)
        assert bin(diff).count("1") == 1


def test_validation():
    with pytest.raises(ValueError):
        bits_to_symbols([0, 1], "natural", 8)       # not a multiple of 3
    with pytest.raises(ValueError):
        bits_to_symbols([0, 2, 0], "natural", 8)    # non-binary
    with pytest.raises(ValueError):
        bits_to_symbols([0, 0, 0], "reflected", 8)
    with pytest.raises(ValueError):
        symbols_to_bits([8], "natural", 8)
    with pytest.raises(ValueError):
        bit_error_rate([0, 1], [0])
    with pytest.raises(ValueError):
        bit_error_rate([], [])


def test_ber_values():
    assert bit_error_rate([0, 1, 1, 0], [0, 1, 1, 0]) == 0.0
    # symbol 0 vs 7: all three bits flip under natural coding
    t = symbols_to_bits([0], "natural", 8)
    d = symbols_to_bits([7], "natural", 8)
    assert bit_error_rate(t, d) == 1.0
    # adjacent symbols cost one bit under gray coding
    t = symbols_to_bits([0], "gray", 8)
    d = symbols_to_bits([1], "gray", 8)
    assert bit_error_rate(t, d) == pytest.approx(1.0 / 3.0)


def test_bit_duration():
    assert bit_duration(0.5, 8) == pytest.approx(0.1667, abs=5e-4)
    assert bit_duration(5.0 / 3.0, 8) == pytest.approx(0.5556, abs=5e-4)
    assert bit_duration(0.7, 2) == pytest.approx(0.7)
    with pytest.raises(ValueError):
        bit_duration(0.0, 8)


@given(st.lists(st.integers(0, 1), min_size=3, max_size=60).filter(lambda b: len(b) % 3 == 0),
       st.sampled_from(["natural", "gray"]))
@settings(max_examples=200, deadline=None)
def test_round_trip_property(bits, scheme):
    symbols = bits_to_symbols(bits, scheme, 8)
    assert list(symbols_to_bits(symbols, scheme, 8)) == bits


@given(st.lists(st.integers(0, 7), min_size=1, max_size=40),
       st.lists(st.integers(0, 7), min_size=1, max_size=40))
@settings(max_examples=100, deadline=None)
def test_ber_symmetry(a, b):
    n = min(len(a), len(b))
    ta = symbols_to_bits(a[:n], "natural", 8)
    tb = symbols_to_bits(b[:n], "natural", 8)
    assert bit_error_rate(ta, tb) == bit_error_rate(tb, ta)
