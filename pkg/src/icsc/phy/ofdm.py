"""20 MHz, 64-point OFDM numerology, MCS table, LS channel estimation and ZF equalization."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .modulation import Modulation

SNR_CAP_DB = 60.0
H_FLOOR = 1e-6

# legacy long training field on tones -26..26 (DC = 0)
LTF_VALUES = np.array([
    1, 1, -1, -1, 1, 1, -1, 1, -1, 1, 1, 1, 1, 1, 1, -1, -1, 1, 1, -1, 1, -1, 1, 1, 1, 1,
    0,
    1, -1, -1, 1, 1, -1, 1, -1, 1, -1, -1, -1, -1, -1, 1, 1, -1, -1, 1, -1, 1, -1, 1, 1, 1, 1,
], dtype=float)

PILOT_TONES = (-21, -7, 7, 21)
PILOT_VALUES = np.array([1.0, 1.0, 1.0, -1.0])


def _default_data_tones() -> tuple[int, ...]:
    return tuple(k for k in range(-26, 27) if k != 0 and k not in PILOT_TONES)


@dataclass(frozen=True)
class OfdmConfig:
    n_fft: int = 64
    cp_len: int = 16
    sample_rate: float = 20e6
    carrier_freq: float = 5.9e9
    ltf_symbols: int = 2
    data_subcarriers: tuple[int, ...] = field(default_factory=_default_data_tones)
    pilot_subcarriers: tuple[int, ...] = PILOT_TONES

    def __post_init__(self):
        if self.n_fft != 64 or self.cp_len != self.n_fft // 4:
            raise ValueError("only the 64-point / 16-sample CP numerology is supported")
        if len(self.data_subcarriers) != 48 or len(self.pilot_subcarriers) != 4:
            raise ValueError("expected 48 data and 4 pilot subcarriers")
        if set(self.data_subcarriers) & set(self.pilot_subcarriers):
            raise ValueError("data and pilot subcarriers overlap")
        if 0 in self.data_subcarriers or 0 in self.pilot_subcarriers:
            raise ValueError("DC cannot carry data or pilots")

    @property
    def symbol_len(self) -> int:
        return self.n_fft + self.cp_len

    @property
    def symbol_duration(self) -> float:
        return self.symbol_len / self.sample_rate

    @property
    def subcarrier_spacing(self) -> float:
        return self.sample_rate / self.n_fft

    @property
    def csi_tones(self) -> np.ndarray:
        """The 53 tones -26..26, DC included."""
        return np.array(sorted(set(self.data_subcarriers) | set(self.pilot_subcarriers) | {0}))

    @property
    def active_tones(self) -> np.ndarray:
        return self.csi_tones[self.csi_tones != 0]

    @property
    def n_data(self) -> int:
        return len(self.data_subcarriers)


@dataclass(frozen=True)
class McsEntry:
    index: int
    modulation: Modulation
    code_rate: Fraction
    phy_rate: float

    @property
    def bits_per_symbol(self) -> int:
        return self.modulation.bits_per_symbol

    def coded_bits_per_ofdm_symbol(self, n_data: int = 48) -> int:
        return n_data * self.bits_per_symbol

    def data_bits_per_ofdm_symbol(self, n_data: int = 48) -> int:
        return int(n_data * self.bits_per_symbol * self.code_rate)

    def __str__(self) -> str:
        return f"MCS{self.index} {self.modulation.name}({self.code_rate})"


_MCS_SET = (
    (Modulation.BPSK, Fraction(1, 2)),
    (Modulation.QPSK, Fraction(1, 2)),
    (Modulation.QPSK, Fraction(3, 4)),
    (Modulation.QAM16, Fraction(1, 2)),
    (Modulation.QAM16, Fraction(3, 4)),
    (Modulation.QAM64, Fraction(2, 3)),
    (Modulation.QAM64, Fraction(3, 4)),
    (Modulation.QAM64, Fraction(5, 6)),
    (Modulation.QAM256, Fraction(3, 4)),
)


def build_mcs_table(config: OfdmConfig | None = None) -> tuple[McsEntry, ...]:
    config = config or OfdmConfig()
    return tuple(
        McsEntry(i, mod, rate, float(config.n_data * mod.bits_per_symbol * rate / config.symbol_duration))
        for i, (mod, rate) in enumerate(_MCS_SET)
    )


MCS_TABLE = build_mcs_table()


def _bins(tones) -> np.ndarray:
    return np.asarray(tones) % 64


def ofdm_modulate(freq_symbols, config: OfdmConfig) -> np.ndarray:
    """Data-tone values (n_symbols x 48) -> CP-prefixed time samples.

    Pilots are inserted internally. The DFT is unitary, so each symbol's
    useful-part energy equals its frequency-domain energy.
    """
    data = np.atleast_2d(np.asarray(freq_symbols, dtype=complex))
    if data.shape[1] != config.n_data:
        raise ValueError(f"expected {config.n_data} values per symbol, got {data.shape[1]}")
    grid = np.zeros((data.shape[0], config.n_fft), dtype=complex)
    grid[:, _bins(config.data_subcarriers)] = data
    grid[:, _bins(config.pilot_subcarriers)] = PILOT_VALUES
    return _to_time(grid, config)


def _to_time(grid: np.ndarray, config: OfdmConfig) -> np.ndarray:
    useful = np.fft.ifft(grid, axis=1, norm="ortho")
    return np.hstack([useful[:, -config.cp_len:], useful]).reshape(-1)


def ltf_grid(config: OfdmConfig) -> np.ndarray:
    grid = np.zeros(config.n_fft, dtype=complex)
    grid[_bins(np.arange(-26, 27))] = LTF_VALUES
    return grid


def preamble(config: OfdmConfig) -> np.ndarray:
    return _to_time(np.tile(ltf_grid(config), (config.ltf_symbols, 1)), config)


def ofdm_demodulate(samples, config: OfdmConfig, tones=None) -> np.ndarray:
    """CP-stripped unitary DFT per symbol; returns (n_symbols x len(tones)).

    ``tones`` defaults to the 53 CSI tones (-26..26).
    """
    samples = np.asarray(samples, dtype=complex).reshape(-1)
    if samples.size % config.symbol_len:
        raise ValueError(f"{samples.size} samples is not a whole number of "
                         f"{config.symbol_len}-sample symbols")
    blocks = samples.reshape(-1, config.symbol_len)[:, config.cp_len:]
    spectrum = np.fft.fft(blocks, axis=1, norm="ortho")
    tones = config.csi_tones if tones is None else np.asarray(tones)
    return spectrum[:, _bins(tones)]


@dataclass(frozen=True)
class CsiEstimate:
    tones: np.ndarray  # 53 complex gains, subcarriers -26..26
    noise_var_est: float
    snr_est_db: float

    def __post_init__(self):
        if self.tones.shape != (53,):
            raise ValueError(f"CSI must have 53 tones, got shape {self.tones.shape}")
        if not np.all(np.isfinite(self.tones)):
            raise ValueError("CSI contains non-finite values")


def estimate_csi_ls(rx_ltf, config: OfdmConfig, known_ltf=None) -> CsiEstimate:
    """LS estimate averaged over the received LTF symbols (rows of ``rx_ltf``, 53 tones each)."""
    y = np.atleast_2d(np.asarray(rx_ltf, dtype=complex))
    x = LTF_VALUES if known_ltf is None else np.asarray(known_ltf)
    active = x != 0
    h = np.zeros(53, dtype=complex)
    h[active] = (y[:, active] / x[active]).mean(axis=0)
    dc = 26
    h[dc] = 0.5 * (h[dc - 1] + h[dc + 1])
    if y.shape[0] >= 2:
        noise_var = float(np.mean(np.abs(y[0, active] - y[1, active]) ** 2) / 2)
    else:
        noise_var = 0.0
    signal = float(np.mean(np.abs(h) ** 2))
    if noise_var <= 0:
        snr_db = SNR_CAP_DB
    elif signal <= 0:
        snr_db = -SNR_CAP_DB
    else:
        snr_db = float(np.clip(10 * np.log10(signal / noise_var), -SNR_CAP_DB, SNR_CAP_DB))
    return CsiEstimate(h, noise_var, snr_db)


def csi_on(csi_tones: np.ndarray, tones, config: OfdmConfig) -> np.ndarray:
    """Pick entries of a 53-tone vector for the given subcarrier indices."""
    return np.asarray(csi_tones)[np.asarray(tones) + 26]


def equalize(freq_symbols, h) -> tuple[np.ndarray, np.ndarray]:
    """One-tap zero-forcing. Returns (equalized, valid) where ``valid`` flags |h| >= floor."""
    y = np.asarray(freq_symbols, dtype=complex)
    h = np.asarray(h, dtype=complex)
    valid = np.abs(h) >= H_FLOOR
    safe = np.where(valid, h, 1.0)
    out = np.where(valid, y / safe, 0.0)
    return out, np.broadcast_to(valid, out.shape)
