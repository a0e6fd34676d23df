"""Frame-level transmit and receive chains."""
from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .coding import N_TAIL, encode_bcc, viterbi_decode
from .modulation import demap_soft, map_symbols
from .ofdm import (
    MCS_TABLE, SNR_CAP_DB, CsiEstimate, McsEntry, OfdmConfig, csi_on, equalize,
    estimate_csi_ls, ofdm_demodulate, ofdm_modulate, preamble,
)

CRC_BITS = 32
DEFAULT_INFO_BITS = 1000


def _mcs(mcs) -> McsEntry:
    return mcs if isinstance(mcs, McsEntry) else MCS_TABLE[int(mcs)]


def append_crc(payload) -> np.ndarray:
    payload = np.asarray(payload, dtype=np.uint8).reshape(-1)
    crc = zlib.crc32(np.packbits(payload).tobytes())
    tail = (crc >> np.arange(CRC_BITS - 1, -1, -1)) & 1
    return np.concatenate([payload, tail.astype(np.uint8)])


def check_crc(info_bits) -> bool:
    info_bits = np.asarray(info_bits, dtype=np.uint8).reshape(-1)
    if info_bits.size <= CRC_BITS:
        return False
    return bool(np.array_equal(append_crc(info_bits[:-CRC_BITS]), info_bits))


def n_data_symbols(n_info: int, mcs, config: OfdmConfig | None = None) -> int:
    config = config or OfdmConfig()
    ndbps = _mcs(mcs).data_bits_per_ofdm_symbol(config.n_data)
    return -(-(n_info + N_TAIL) // ndbps)


def frame_length(n_info: int, mcs, config: OfdmConfig | None = None) -> int:
    config = config or OfdmConfig()
    return (config.ltf_symbols + n_data_symbols(n_info, mcs, config)) * config.symbol_len


def data_airtime(n_info: int, mcs, config: OfdmConfig | None = None) -> float:
    """Duration of the data symbols only (preamble excluded)."""
    config = config or OfdmConfig()
    return n_data_symbols(n_info, mcs, config) * config.symbol_duration


def interleave_permutation(n_cbps: int, bits_per_symbol: int) -> np.ndarray:
    """802.11 block interleaver: position j receives coded bit k, returned as perm[k] = j."""
    k = np.arange(n_cbps)
    s = max(bits_per_symbol // 2, 1)
    i = (n_cbps // 16) * (k % 16) + k // 16
    return s * (i // s) + (i + n_cbps - (16 * i) // n_cbps) % s


@dataclass(frozen=True)
class Frame:
    info_bits: np.ndarray
    mcs: int
    td_samples: np.ndarray
    n_data_symbols: int


@dataclass(frozen=True)
class RxResult:
    bits: np.ndarray
    csi: CsiEstimate
    crc_ok: bool
    equalized: np.ndarray
    llrs: np.ndarray


def run_frame_tx(info_bits, mcs, config: OfdmConfig | None = None, interleave: bool = False) -> Frame:
    config = config or OfdmConfig()
    entry = _mcs(mcs)
    info = np.asarray(info_bits, dtype=np.uint8).reshape(-1)
    n_sym = n_data_symbols(info.size, entry, config)
    ndbps = entry.data_bits_per_ofdm_symbol(config.n_data)
    pad = n_sym * ndbps - info.size - N_TAIL
    coded = encode_bcc(np.concatenate([info, np.zeros(pad, dtype=np.uint8)]), entry.code_rate)
    n_cbps = entry.coded_bits_per_ofdm_symbol(config.n_data)
    if interleave:
        perm = interleave_permutation(n_cbps, entry.bits_per_symbol)
        blocks = coded.reshape(n_sym, n_cbps)
        shuffled = np.empty_like(blocks)
        shuffled[:, perm] = blocks
        coded = shuffled.reshape(-1)
    symbols = map_symbols(coded, entry.modulation).reshape(n_sym, config.n_data)
    samples = np.concatenate([preamble(config), ofdm_modulate(symbols, config)])
    return Frame(info, entry.index, samples, n_sym)


def receive_frame(td_samples, mcs, config: OfdmConfig | None = None,
                  n_info: int = DEFAULT_INFO_BITS, interleave: bool = False,
                  channel_override=None) -> RxResult:
    """Full receive chain. ``channel_override`` (53 tones) replaces the LS estimate for equalization."""
    config = config or OfdmConfig()
    entry = _mcs(mcs)
    n_sym = n_data_symbols(n_info, entry, config)
    samples = np.asarray(td_samples, dtype=complex).reshape(-1)
    expected = (config.ltf_symbols + n_sym) * config.symbol_len
    if samples.size < expected:
        raise ValueError(f"frame truncated: {samples.size} < {expected} samples")
    freq = ofdm_demodulate(samples[:expected], config)
    csi = estimate_csi_ls(freq[:config.ltf_symbols], config)
    h_all = csi.tones if channel_override is None else np.asarray(channel_override)
    data_tones = np.asarray(config.data_subcarriers)
    h = csi_on(h_all, data_tones, config)
    y = freq[config.ltf_symbols:, data_tones + 26]
    eq, valid = equalize(y, h)
    noise_floor = np.mean(np.abs(csi.tones) ** 2) * 10 ** (-SNR_CAP_DB / 10)
    noise_var = max(csi.noise_var_est, noise_floor, np.finfo(float).tiny)
    post_var = np.where(valid, noise_var / np.maximum(np.abs(h), 1e-300) ** 2, 0.0)
    llrs = demap_soft(eq.reshape(-1), entry.modulation, post_var.reshape(-1))
    if interleave:
        n_cbps = entry.coded_bits_per_ofdm_symbol(config.n_data)
        perm = interleave_permutation(n_cbps, entry.bits_per_symbol)
        llrs = llrs.reshape(n_sym, n_cbps)[:, perm].reshape(-1)
    ndbps = entry.data_bits_per_ofdm_symbol(config.n_data)
    decoded = viterbi_decode(llrs, entry.code_rate, n_sym * ndbps - N_TAIL)
    bits = decoded[:n_info]
    return RxResult(bits, csi, check_crc(bits), eq, llrs)


def run_frame_rx(td_samples, mcs, config: OfdmConfig | None = None,
                 n_info: int = DEFAULT_INFO_BITS, interleave: bool = False):
    """Returns ``(bits, csi, crc_ok)``."""
    rx = receive_frame(td_samples, mcs, config, n_info, interleave)
    return rx.bits, rx.csi, rx.crc_ok
