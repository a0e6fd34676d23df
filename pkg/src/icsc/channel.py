"""Tapped-delay-line fading channel emulator (EPA, TDL-C, TDL-E) with AWGN.

Tap tables are read from ``data/tdl_profiles.json``. Each tap fades
independently through a sum of sinusoids with randomized arrival angles and
phases (Jakes spectrum); Rician taps add a fixed line-of-sight phasor. Tap
delays are rounded to the sample grid when the channel is applied.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import numpy as np
from numba import njit

PROFILE_NAMES = ("EPA", "TDL_C", "TDL_E")
DEFAULT_SAMPLE_RATE = 20e6
DEFAULT_DOPPLER_HZ = 50.0
N_SINUSOIDS = 32

_ALIASES = {"TDL-C": "TDL_C", "TDL-E": "TDL_E", "TDLC": "TDL_C", "TDLE": "TDL_E"}


def canonical_name(name: str) -> str:
    key = str(name).upper()
    key = _ALIASES.get(key, key)
    if key not in PROFILE_NAMES:
        raise ValueError(f"unknown channel profile {name!r}; expected one of {PROFILE_NAMES}")
    return key


@lru_cache(maxsize=None)
def _profile_table() -> dict:
    text = resources.files("icsc").joinpath("data/tdl_profiles.json").read_text()
    return {p["name"]: p for p in json.loads(text)["profiles"]}


@dataclass(frozen=True)
class TdlProfile:
    name: str
    tap_delays: np.ndarray      # seconds, strictly increasing
    tap_powers_db: np.ndarray   # normalized so linear powers sum to 1
    k_db: np.ndarray            # Rician K per tap, -inf for Rayleigh taps
    delay_scaling: float = 1.0  # seconds; 1.0 for absolute-delay profiles

    @property
    def n_taps(self) -> int:
        return self.tap_delays.size

    @property
    def tap_powers(self) -> np.ndarray:
        return 10 ** (self.tap_powers_db / 10)

    @property
    def tap_kind(self) -> tuple[str, ...]:
        return tuple("rician" if np.isfinite(k) else "rayleigh" for k in self.k_db)

    @property
    def rician_k(self) -> np.ndarray:
        """Linear K-factor per tap (0 for Rayleigh)."""
        return np.where(np.isfinite(self.k_db), 10 ** (self.k_db / 10), 0.0)

    def rms_delay_spread(self) -> float:
        return rms_delay_spread(self.tap_delays, self.tap_powers)


def rms_delay_spread(delays, powers) -> float:
    delays = np.asarray(delays, dtype=float)
    p = np.asarray(powers, dtype=float)
    mean = np.sum(p * delays) / np.sum(p)
    return float(np.sqrt(max(np.sum(p * delays ** 2) / np.sum(p) - mean ** 2, 0.0)))


def tdl_profile(name: str, delay_scaling: float | None = None) -> TdlProfile:
    """Build a profile from the shipped tap tables.

    Normalized-delay profiles (TDL-C, TDL-E) are scaled by ``delay_scaling``
    seconds (defaults 300 ns and 100 ns). Taps sharing a delay are merged by
    summing their linear powers.
    """
    key = canonical_name(name)
    raw = _profile_table()[key]
    delays = np.array([t["delay"] for t in raw["taps"]], dtype=float)
    powers = 10 ** (np.array([t["power_db"] for t in raw["taps"]], dtype=float) / 10)
    k_db = np.array([t.get("k_db", -np.inf) if t["kind"] == "rician" else -np.inf
                     for t in raw["taps"]], dtype=float)
    if raw["delay_unit"] == "ns":
        if delay_scaling is not None:
            raise ValueError(f"{key} uses absolute delays; delay_scaling does not apply")
        delays = delays * 1e-9
        scaling = 1.0
    else:
        scaling = raw["default_delay_scaling_ns"] * 1e-9 if delay_scaling is None else float(delay_scaling)
        if not scaling > 0:
            raise ValueError(f"delay_scaling must be positive, got {delay_scaling!r}")
        delays = delays * scaling

    order = np.argsort(delays, kind="stable")
    delays, powers, k_db = delays[order], powers[order], k_db[order]
    uniq, inverse = np.unique(delays, return_inverse=True)
    if uniq.size != delays.size:
        merged_k = np.full(uniq.size, -np.inf)
        for i in range(uniq.size):
            members = np.flatnonzero(inverse == i)
            if members.size > 1 and np.isfinite(k_db[members]).any():
                raise ValueError(f"{key}: cannot merge a Rician tap with another tap")
            merged_k[i] = k_db[members[0]]
        powers = np.bincount(inverse, weights=powers)
        delays, k_db = uniq, merged_k
    powers = powers / powers.sum()
    return TdlProfile(key, delays, 10 * np.log10(powers), k_db, scaling)


@dataclass(frozen=True)
class LinkCondition:
    snr_db: float
    doppler_hz: float = DEFAULT_DOPPLER_HZ

    def __post_init__(self):
        if not np.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite")
        if self.doppler_hz < 0:
            raise ValueError("doppler_hz must be non-negative")


@dataclass(frozen=True)
class ChannelRealization:
    profile: TdlProfile
    doppler_hz: float
    seed: int
    sample_rate: float
    omega: np.ndarray = field(repr=False)      # (n_taps, M) rad/s
    phase: np.ndarray = field(repr=False)      # (n_taps, M)
    los_phase: np.ndarray = field(repr=False)  # (n_taps,)

    @property
    def delay_samples(self) -> np.ndarray:
        return np.rint(self.profile.tap_delays * self.sample_rate).astype(int)

    def _amplitudes(self):
        p = self.profile.tap_powers
        k = self.profile.rician_k
        diffuse = np.sqrt(p / (k + 1) / self.omega.shape[1])
        los = np.sqrt(p * k / (k + 1)) * np.exp(1j * self.los_phase)
        return diffuse, los

    def tap_gains(self, times) -> np.ndarray:
        """Complex gain of every tap at the given times, shape (n_taps, len(times))."""
        t = np.atleast_1d(np.asarray(times, dtype=float))
        diffuse, los = self._amplitudes()
        out = np.empty((self.profile.n_taps, t.size), dtype=complex)
        for i in range(self.profile.n_taps):
            arg = np.outer(self.omega[i], t)
            arg += self.phase[i][:, None]
            out[i] = diffuse[i] * np.exp(1j * arg).sum(axis=0) + los[i]
        return out

    def tap_gains_uniform(self, start_time: float, n: int) -> np.ndarray:
        """Same as ``tap_gains`` on the sample grid ``start_time + arange(n) / sample_rate``."""
        diffuse, los = self._amplitudes()
        return _sos_uniform(self.omega, self.phase, diffuse, los, float(start_time),
                            1.0 / self.sample_rate, int(n))


_ANCHOR = 256


@njit(cache=True)
def _sos_uniform(omega, phase, diffuse, los, t0, dt, n):
    # phasor recurrence, re-anchored to the exact exponential every _ANCHOR samples
    n_taps, m = omega.shape
    out = np.empty((n_taps, n), dtype=np.complex128)
    for i in range(n_taps):
        for s in range(n):
            out[i, s] = los[i]
        for j in range(m):
            w = omega[i, j]
            step = np.exp(1j * w * dt)
            a = diffuse[i]
            for s0 in range(0, n, _ANCHOR):
                z = a * np.exp(1j * (w * (t0 + s0 * dt) + phase[i, j]))
                for s in range(s0, min(s0 + _ANCHOR, n)):
                    out[i, s] += z
                    z *= step
    return out


def realize_channel(profile: TdlProfile, doppler_hz: float = DEFAULT_DOPPLER_HZ, seed: int = 0,
                    sample_rate: float = DEFAULT_SAMPLE_RATE,
                    n_sinusoids: int = N_SINUSOIDS) -> ChannelRealization:
    """Seeded fading instance of ``profile``; ``doppler_hz = 0`` gives a static draw."""
    if doppler_hz < 0:
        raise ValueError("doppler_hz must be non-negative")
    rng = np.random.default_rng(seed)
    n = profile.n_taps
    offset = rng.uniform(0, 2 * np.pi, size=(n, 1))
    angles = (2 * np.pi * np.arange(n_sinusoids)[None, :] + offset) / n_sinusoids
    phase = rng.uniform(0, 2 * np.pi, size=(n, n_sinusoids))
    los_phase = rng.uniform(0, 2 * np.pi, size=n)
    omega = 2 * np.pi * doppler_hz * np.cos(angles)
    return ChannelRealization(profile, float(doppler_hz), seed, float(sample_rate), omega, phase, los_phase)


def sample_times(n: int, start_time: float, sample_rate: float) -> np.ndarray:
    return start_time + np.arange(n) / sample_rate


def binned_gains(realization: ChannelRealization, n: int, start_time: float = 0.0):
    """Per-sample gains summed over taps that land on the same integer delay.

    Returns ``(delays, gains)`` with gains shaped (len(delays), n).
    """
    gains = realization.tap_gains_uniform(start_time, n)
    delays = realization.delay_samples
    uniq, inverse = np.unique(delays, return_inverse=True)
    binned = np.zeros((uniq.size, n), dtype=complex)
    np.add.at(binned, inverse, gains)
    return uniq, binned


def convolve_time_varying(samples: np.ndarray, delays: np.ndarray, gains: np.ndarray) -> np.ndarray:
    """y[n] = sum_d g_d[n] x[n - d]; output has the input's length."""
    x = np.asarray(samples, dtype=complex)
    n = x.size
    y = np.zeros(n, dtype=complex)
    for d, g in zip(delays, gains):
        if d >= n:
            continue
        y[d:] += g[d:n] * x[:n - d]
    return y


def apply_channel(samples, realization: ChannelRealization, start_time: float = 0.0,
                  sample_rate: float | None = None) -> np.ndarray:
    """Pass ``samples`` through the time-varying tapped delay line starting at ``start_time``."""
    if sample_rate is not None and sample_rate != realization.sample_rate:
        raise ValueError("sample rate does not match the realization")
    x = np.asarray(samples, dtype=complex).reshape(-1)
    delays, gains = binned_gains(realization, x.size, start_time)
    return convolve_time_varying(x, delays, gains)


def noise(n: int, variance: float, seed) -> np.ndarray:
    """Circular complex Gaussian noise; ``seed`` may be an int, SeedSequence or Generator."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    z = rng.standard_normal((n, 2))
    return np.sqrt(variance / 2) * (z[:, 0] + 1j * z[:, 1])


def noise_variance(snr_db: float, signal_power: float = 1.0) -> float:
    return signal_power / 10 ** (snr_db / 10)


def is_noiseless(snr_db) -> bool:
    return snr_db is None or (isinstance(snr_db, str) and snr_db.lower() == "noiseless") \
        or (not isinstance(snr_db, str) and np.isposinf(snr_db))


def add_awgn(samples, snr_db, seed=None, signal_power: float = 1.0) -> np.ndarray:
    """Add noise of variance ``signal_power / 10**(snr_db/10)``.

    ``signal_power`` is the nominal transmit power reference (unit power per
    active subcarrier for the OFDM chain), not the instantaneous received
    power. ``snr_db`` of None, inf or "noiseless" returns the input unchanged.
    """
    x = np.asarray(samples, dtype=complex)
    if is_noiseless(snr_db):
        return x.copy()
    return x + noise(x.size, noise_variance(float(snr_db), signal_power), seed).reshape(x.shape)


def true_freq_response(realization: ChannelRealization, time: float, csi_tones=None,
                       n_fft: int = 64) -> np.ndarray:
    """Exact DFT of the instantaneous (sample-rounded) taps on the CSI grid."""
    tones = np.arange(-26, 27) if csi_tones is None else np.asarray(csi_tones)
    g = realization.tap_gains([time])[:, 0]
    d = realization.delay_samples
    return np.exp(-2j * np.pi * np.outer(tones, d) / n_fft) @ g
