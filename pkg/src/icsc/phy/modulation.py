"""Gray-mapped square constellations and max-log soft demapping."""
from __future__ import annotations

from enum import Enum

import numpy as np


class Modulation(Enum):
    BPSK = 1
    QPSK = 2
    QAM16 = 4
    QAM64 = 6
    QAM256 = 8

    @property
    def bits_per_symbol(self) -> int:
        return self.value

    @property
    def bits_per_axis(self) -> int:
        return 1 if self is Modulation.BPSK else self.value // 2

    @property
    def scale(self) -> float:
        """Normalizer giving unit mean symbol energy (1, 1/sqrt(2), 1/sqrt(10), ...)."""
        if self is Modulation.BPSK:
            return 1.0
        m = 1 << self.bits_per_axis
        return 1.0 / np.sqrt(2.0 * (m * m - 1) / 3.0)


def _axis_table(n_bits: int) -> tuple[np.ndarray, np.ndarray]:
    """PAM levels in ascending order and their Gray labels (MSB first)."""
    m = 1 << n_bits
    idx = np.arange(m)
    levels = (2 * idx - (m - 1)).astype(float)
    gray = idx ^ (idx >> 1)
    labels = (gray[:, None] >> np.arange(n_bits - 1, -1, -1)) & 1
    return levels, labels.astype(np.uint8)


def _axis_values(bit_groups: np.ndarray, n_bits: int) -> np.ndarray:
    levels, labels = _axis_table(n_bits)
    weights = 1 << np.arange(n_bits - 1, -1, -1)
    lookup = np.empty(1 << n_bits)
    lookup[labels @ weights] = levels
    return lookup[bit_groups @ weights]


def map_symbols(bits, modulation: Modulation) -> np.ndarray:
    """Map bits to unit-energy constellation points (first half of each group on I)."""
    bits = np.asarray(bits, dtype=np.int64).reshape(-1)
    k = modulation.bits_per_symbol
    if bits.size % k:
        raise ValueError(f"{bits.size} bits is not a multiple of {k} for {modulation.name}")
    groups = bits.reshape(-1, k)
    if modulation is Modulation.BPSK:
        return _axis_values(groups, 1) + 0j
    half = modulation.bits_per_axis
    i = _axis_values(groups[:, :half], half)
    q = _axis_values(groups[:, half:], half)
    return (i + 1j * q) * modulation.scale


def constellation(modulation: Modulation) -> np.ndarray:
    """All points, indexed by the integer value of their bit label."""
    k = modulation.bits_per_symbol
    labels = (np.arange(1 << k)[:, None] >> np.arange(k - 1, -1, -1)) & 1
    return map_symbols(labels.reshape(-1), modulation)


def _axis_llrs(y: np.ndarray, noise_var: np.ndarray, n_bits: int, scale: float) -> np.ndarray:
    levels, labels = _axis_table(n_bits)
    d2 = (y[:, None] - scale * levels[None, :]) ** 2
    out = np.empty((y.size, n_bits))
    for b in range(n_bits):
        ones = labels[:, b] == 1
        out[:, b] = d2[:, ones].min(axis=1) - d2[:, ~ones].min(axis=1)
    return out / noise_var[:, None]


def demap_soft(symbols, modulation: Modulation, noise_var) -> np.ndarray:
    """Max-log bit LLRs; positive favours bit 0.

    ``noise_var`` is the complex noise variance per symbol after equalization
    (scalar or one value per symbol). Symbols with zero or non-finite variance
    get zero LLRs.
    """
    y = np.asarray(symbols, dtype=complex).reshape(-1)
    nv = np.broadcast_to(np.asarray(noise_var, dtype=float), y.shape).copy()
    dead = ~np.isfinite(nv) | (nv <= 0)
    nv[dead] = 1.0
    if modulation is Modulation.BPSK:
        llr = _axis_llrs(y.real, nv, 1, 1.0)
    else:
        half = modulation.bits_per_axis
        s = modulation.scale
        llr = np.hstack([_axis_llrs(y.real, nv, half, s), _axis_llrs(y.imag, nv, half, s)])
    llr[dead] = 0.0
    return llr.reshape(-1)


def demap_hard(symbols, modulation: Modulation) -> np.ndarray:
    llr = demap_soft(symbols, modulation, 1.0)
    return (llr < 0).astype(np.uint8)
