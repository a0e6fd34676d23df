"""Link-level simulation glue shared by dataset generation, evaluation and the IVS.

Every stochastic draw is keyed by ``derive_seed(master, *keys)``, so any frame
can be regenerated in isolation and paired arms can replay identical channel
and noise realizations.
"""
from __future__ import annotations

import zlib

import numpy as np

from .channel import (
    DEFAULT_DOPPLER_HZ, ChannelRealization, binned_gains, convolve_time_varying, noise,
    noise_variance, realize_channel, tdl_profile,
)
from .phy import (
    CRC_BITS, MCS_TABLE, OfdmConfig, append_crc, estimate_csi_ls, frame_length, ofdm_demodulate,
    preamble, receive_frame, run_frame_tx,
)

SCENARIOS = ("EPA", "TDL_C", "TDL_E")
IDENTITY = "AWGN"     # pseudo-scenario: unit single-tap channel, noise only

_KEY_CODES = {"channel": 1, "noise": 2, "payload": 3, "dataset": 4, "si_eval": 5, "table": 6,
              "ivs": 7, "snr": 8, "train_si": 9, "train_d3qn": 10, "split": 11}


def _key(k) -> int:
    if isinstance(k, str):
        return _KEY_CODES.get(k, zlib.crc32(k.encode()))
    return int(k)


def derive_seed(master: int, *keys) -> int:
    """Deterministic 63-bit child seed of ``master`` for a tuple of int/str keys."""
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(_key(k) for k in keys))
    return int(ss.generate_state(2, dtype=np.uint64)[0] >> np.uint64(1))


def scenario_index(label: str) -> int:
    return SCENARIOS.index(label)


def channel_gains(scenario: str, n: int, seed: int, doppler_hz: float = DEFAULT_DOPPLER_HZ,
                  start_time: float = 0.0):
    """Binned (delays, gains) for ``n`` samples of a fresh draw; ``IDENTITY`` gives a unit tap."""
    if scenario == IDENTITY:
        return np.zeros(1, dtype=np.int64), np.ones((1, n), dtype=complex)
    real = realize_channel(tdl_profile(scenario), doppler_hz, derive_seed(seed, "channel"))
    return binned_gains(real, n, start_time)


def received_preamble(realization: ChannelRealization, snr_db: float, noise_seed: int,
                      config: OfdmConfig | None = None, start_time: float = 0.0) -> np.ndarray:
    config = config or OfdmConfig()
    tx = preamble(config)
    delays, gains = binned_gains(realization, tx.size, start_time)
    rx = convolve_time_varying(tx, delays, gains)
    return rx + noise(tx.size, noise_variance(snr_db), noise_seed)


def measure_csi(scenario: str, snr_db: float, seed: int, doppler_hz: float = DEFAULT_DOPPLER_HZ,
                config: OfdmConfig | None = None):
    """One LS CSI estimate of a fresh channel draw of ``scenario`` at ``snr_db``."""
    config = config or OfdmConfig()
    real = realize_channel(tdl_profile(scenario), doppler_hz, derive_seed(seed, "channel"))
    rx = received_preamble(real, snr_db, derive_seed(seed, "noise"), config)
    return estimate_csi_ls(ofdm_demodulate(rx, config), config)


def random_payload(seed: int, n_info: int = 1000) -> np.ndarray:
    rng = np.random.default_rng(derive_seed(seed, "payload"))
    return append_crc(rng.integers(0, 2, n_info - CRC_BITS, dtype=np.uint8))


def simulate_frame_grid(scenario: str, snr_grid, mcs_indices, seed: int,
                        doppler_hz: float = DEFAULT_DOPPLER_HZ, n_info: int = 1000,
                        config: OfdmConfig | None = None, interleave: bool = False) -> dict:
    """Send one payload at every MCS through one channel draw at every SNR.

    ``scenario`` may be ``IDENTITY`` for an AWGN-only link.

    The channel draw, payload and unit-variance noise stream are shared across
    the grid (common random numbers), so differences between cells come from
    SNR and MCS alone. Returns arrays indexed [snr, mcs] for ``crc_ok`` and
    ``bit_errors`` plus ``snr_est`` per SNR.
    """
    config = config or OfdmConfig()
    snr_grid = np.asarray(snr_grid, dtype=float)
    mcs_indices = list(mcs_indices)
    n_max = max(frame_length(n_info, MCS_TABLE[m], config) for m in mcs_indices)
    delays, gains = channel_gains(scenario, n_max, seed, doppler_hz)
    unit_noise = noise(n_max, 1.0, derive_seed(seed, "noise"))
    info = random_payload(seed, n_info)
    crc_ok = np.zeros((snr_grid.size, len(mcs_indices)), dtype=bool)
    bit_errors = np.zeros((snr_grid.size, len(mcs_indices)), dtype=np.int64)
    snr_est = np.zeros(snr_grid.size)
    for j, m in enumerate(mcs_indices):
        tx = run_frame_tx(info, m, config, interleave).td_samples
        clean = convolve_time_varying(tx, delays, gains[:, :tx.size])
        for i, snr in enumerate(snr_grid):
            rx = receive_frame(clean + unit_noise[:tx.size] * np.sqrt(noise_variance(snr)),
                               m, config, n_info, interleave)
            crc_ok[i, j] = rx.crc_ok
            bit_errors[i, j] = int(np.count_nonzero(rx.bits != info))
            if j == 0:
                snr_est[i] = rx.csi.snr_est_db
    return {"crc_ok": crc_ok, "bit_errors": bit_errors, "snr_est": snr_est}
