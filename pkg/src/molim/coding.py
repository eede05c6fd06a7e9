"""Bit <-> transmitter-index maps (natural / binary-reflected Gray) and BER."""

from __future__ import annotations

import math

import numpy as np

SCHEMES = ("natural", "gray")


def _check_scheme(scheme: str):
    if scheme not in SCHEMES:
        raise ValueError(f"unknown coding scheme {scheme!r}, expected one of {SCHEMES}")


def _bits_per_symbol(n_tx: int) -> int:
    b = int(round(math.log2(n_tx)))
    if 2 ** b != n_tx or n_tx < 2:
        raise ValueError(f"n_tx must be a power of two >= 2, got {n_tx}")
    return b


def gray_encode(value: int) -> int:
    return value ^ (value >> 1)


def gray_decode(code: int) -> int:
    value = 0
    while code:
        value ^= code
        code >>= 1
    return value


def bits_to_symbols(bits, scheme: str, n_tx: int) -> np.ndarray:
    """Pack consecutive log2(n_tx)-bit groups (MSB first) into indices."""
    _check_scheme(scheme)
    b = _bits_per_symbol(n_tx)
    bits = np.asarray(bits, dtype=np.int64)
    if bits.ndim != 1 or bits.size % b != 0:
        raise ValueError(f"bit count {bits.size} is not a multiple of {b}")
    if bits.size and not np.isin(bits, (0, 1)).all():
        raise ValueError("bits must be 0 or 1")
    packets = bits.reshape(-1, b)
    weights = 1 << np.arange(b - 1, -1, -1)
    values = packets @ weights
    if scheme == "gray":
        values = np.array([gray_decode(int(v)) for v in values], dtype=np.int64)
    return values


def symbols_to_bits(symbols, scheme: str, n_tx: int) -> np.ndarray:
    """Inverse of bits_to_symbols."""
    _check_scheme(scheme)
    b = _bits_per_symbol(n_tx)
    symbols = np.asarray(symbols, dtype=np.int64)
    if symbols.size and (symbols.min() < 0 or symbols.max() >= n_tx):
        raise ValueError(f"symbols must lie in [0, {n_tx})")
    values = symbols
    if scheme == "gray":
        values = np.array([gray_encode(int(v)) for v in symbols], dtype=np.int64)
    shifts = np.arange(b - 1, -1, -1)
    return ((values[:, None] >> shifts) & 1).reshape(-1)


def bit_error_rate(true_bits, decoded_bits) -> float:
    a = np.asarray(true_bits)
    b = np.asarray(decoded_bits)
    if a.size != b.size:
        raise ValueError(f"bit stream lengths differ: {a.size} vs {b.size}")
    if a.size == 0:
        raise ValueError("bit streams must be non-empty")
    return float(np.count_nonzero(a != b)) / a.size


def bit_duration(t_s: float, n_tx: int) -> float:
    """t_b = t_s / bits-per-symbol."""
    if t_s <= 0:
        raise ValueError("t_s must be positive")
    return t_s / _bits_per_symbol(n_tx)
