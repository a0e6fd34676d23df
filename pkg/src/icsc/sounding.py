"""Channel sounding from demodulation-time CSI.

PDP and delay-spread statistics per CSI estimate, SAGE multipath extraction
over CSI snapshot sequences, and an append-only channel-feature library.
"""
from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .phy.ofdm import CsiEstimate, OfdmConfig
from .validation import check_positive_int, check_snapshots

N_BINS = 64
BIN_SPACING = 50e-9
PDP_FLOOR_DB = -25.0
SIG_PATH_DB = 20.0
NOISE_MARGIN_DB = 6.0   # bins must clear their expected noise power by this much


@dataclass(frozen=True)
class Pdp:
    delay_bins: np.ndarray
    power: np.ndarray
    noise_power: np.ndarray | None = None   # expected estimation-noise power per bin

    def __post_init__(self):
        if self.power.shape != (N_BINS,) or np.any(self.power < 0):
            raise ValueError("PDP must hold 64 non-negative bins")
        if self.noise_power is not None and self.noise_power.shape != (N_BINS,):
            raise ValueError("noise_power must hold 64 bins")


@dataclass(frozen=True)
class ChannelFeatures:
    rms_ds: float
    mean_delay: float
    path_loss_db: float
    n_sig_paths: int
    snr_db: float

    def as_vector(self) -> np.ndarray:
        return np.array([self.rms_ds, self.mean_delay, self.path_loss_db, self.n_sig_paths, self.snr_db])


@dataclass(frozen=True)
class PathEstimate:
    delay: float
    doppler: float
    amplitude: complex


def _tones_of(csi) -> np.ndarray:
    tones = csi.tones if isinstance(csi, CsiEstimate) else np.asarray(csi, dtype=complex)
    if tones.shape != (53,):
        raise ValueError(f"expected 53 CSI tones, got shape {tones.shape}")
    return tones


def _delay_matrix(tones: np.ndarray, n_taps: int) -> np.ndarray:
    # unitary-DFT synthesis: H(k) = sum_n h[n] exp(-j 2 pi k n / 64)
    return np.exp(-2j * np.pi * np.outer(tones, np.arange(n_taps)) / N_BINS)


def pdp_from_csi(csi, method: str = "ls", support: int | None = None,
                 config: OfdmConfig | None = None, error_var: float | None = None) -> Pdp:
    """Power delay profile on 64 bins of 50 ns.

    ``method="ls"`` fits delay-domain taps on bins ``0..support-1`` (default:
    the CP length plus one) by least squares over the 52 measured tones, so
    on-grid channels inside the support are recovered without leakage.
    ``method="idft"`` zero-fills the 53 tones to 64 and takes the unitary
    inverse DFT; it preserves energy but leaks into neighbouring bins.

    ``error_var`` is the per-tone CSI error variance; for a CsiEstimate it
    defaults to the noise estimate divided by the number of LTF symbols. When
    known, the expected noise power of every bin is attached to the PDP.
    """
    config = config or OfdmConfig()
    h = _tones_of(csi)
    if error_var is None and isinstance(csi, CsiEstimate) and csi.noise_var_est > 0:
        error_var = csi.noise_var_est / config.ltf_symbols
    tones = np.arange(-26, 27)
    power = np.zeros(N_BINS)
    noise = None
    if method == "idft":
        grid = np.zeros(N_BINS, dtype=complex)
        grid[tones % N_BINS] = h
        power = np.abs(np.fft.ifft(grid, norm="ortho")) ** 2
        if error_var:
            noise = np.full(N_BINS, error_var * tones.size / N_BINS)
    elif method == "ls":
        support = config.cp_len + 1 if support is None else int(support)
        if not 1 <= support <= 52:
            raise ValueError("support must lie in 1..52 bins")
        measured = tones != 0
        A = _delay_matrix(tones[measured], support)
        taps, *_ = np.linalg.lstsq(A, h[measured], rcond=None)
        power[:support] = np.abs(taps) ** 2
        if error_var:
            noise = np.full(N_BINS, np.inf)
            noise[:support] = error_var * np.real(np.diag(np.linalg.inv(A.conj().T @ A)))
    else:
        raise ValueError(f"unknown PDP method {method!r}")
    return Pdp(np.arange(N_BINS) * BIN_SPACING, power, noise)


def delay_moments(delays, power, floor_db: float = PDP_FLOOR_DB,
                  noise_power=None) -> tuple[float, float]:
    """(mean delay, RMS delay spread) over bins within ``floor_db`` of the peak.

    With ``noise_power`` (per bin), bins must also exceed their noise power by
    ``NOISE_MARGIN_DB`` and contribute their power minus the noise.
    """
    p = np.asarray(power, dtype=float)
    tau = np.asarray(delays, dtype=float)
    peak = p.max()
    if peak <= 0:
        raise ValueError("PDP has no power")
    keep = p >= peak * 10 ** (floor_db / 10)
    if noise_power is not None:
        noise = np.asarray(noise_power, dtype=float)
        clear = p >= noise * 10 ** (NOISE_MARGIN_DB / 10)
        if np.any(keep & clear):
            keep &= clear
            p = np.where(keep, np.maximum(p - noise, 0.0), 0.0)
    p, tau = p[keep], tau[keep]
    mean = np.sum(p * tau) / np.sum(p)
    second = np.sum(p * tau ** 2) / np.sum(p)
    return float(mean), float(np.sqrt(max(second - mean ** 2, 0.0)))


def extract_features(pdp: Pdp, csi, floor_db: float = PDP_FLOOR_DB) -> ChannelFeatures:
    mean, rms = delay_moments(pdp.delay_bins, pdp.power, floor_db, pdp.noise_power)
    h = _tones_of(csi)
    gain = np.mean(np.abs(h) ** 2)
    path_loss = float(-10 * np.log10(gain)) if gain > 0 else float("inf")
    sig = pdp.power >= pdp.power.max() * 10 ** (-SIG_PATH_DB / 10)
    if pdp.noise_power is not None:
        sig &= pdp.power >= pdp.noise_power * 10 ** (NOISE_MARGIN_DB / 10)
    n_sig = max(int(np.sum(sig)), 1)
    snr = csi.snr_est_db if isinstance(csi, CsiEstimate) else float("nan")
    return ChannelFeatures(rms, mean, path_loss, n_sig, snr)


class ChannelFeatureExtractor(TransformerMixin, BaseEstimator):
    """Stateless transformer: CSI estimates -> rows of (rms_ds, mean_delay, path_loss_db, n_sig_paths, snr_db)."""

    def __init__(self, method="ls", floor_db=PDP_FLOOR_DB):
        self.method = method
        self.floor_db = floor_db

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        rows = []
        for csi in X:
            pdp = pdp_from_csi(csi, method=self.method)
            rows.append(extract_features(pdp, csi, self.floor_db).as_vector())
        return np.array(rows).reshape(-1, 5)


# SAGE ------------------------------------------------------------------------


class SageEstimator(BaseEstimator):
    """Space-alternating EM estimate of per-path (delay, Doppler, amplitude).

    ``fit`` takes a (T, n_tones) matrix of CSI snapshots and their timestamps.
    Paths are initialized by successive cancellation at the residual's 2-D
    matched-filter peak, then refined one at a time: the E-step subtracts the
    other paths' current reconstruction, the M-step searches the delay grid,
    then the Doppler grid, then solves the amplitude by least squares.
    """

    def __init__(self, n_paths=1, delay_step=12.5e-9, max_delay=N_BINS * BIN_SPACING,
                 doppler_step=1.0, max_doppler=100.0, max_iter=50, tol=1e-4,
                 subcarrier_spacing=312.5e3):
        self.n_paths = n_paths
        self.delay_step = delay_step
        self.max_delay = max_delay
        self.doppler_step = doppler_step
        self.max_doppler = max_doppler
        self.max_iter = max_iter
        self.tol = tol
        self.subcarrier_spacing = subcarrier_spacing

    def _grids(self, n_snapshots):
        delays = np.arange(0.0, self.max_delay - 1e-15, self.delay_step)
        if n_snapshots < 2:
            dopplers = np.zeros(1)
        else:
            n = int(round(self.max_doppler / self.doppler_step))
            dopplers = np.arange(-n, n + 1) * self.doppler_step
        return delays, dopplers

    def fit(self, snapshots, times=None, tones=None):
        H, times, tones = check_snapshots(snapshots, times, tones)
        n_t, n_k = H.shape
        check_positive_int(self.n_paths, "n_paths")
        if not 1 <= self.n_paths <= n_t * n_k:
            raise ValueError(f"n_paths={self.n_paths} exceeds the {n_t}x{n_k} observation")
        delays, dopplers = self._grids(n_t)
        freqs = tones * self.subcarrier_spacing
        A = np.exp(-2j * np.pi * np.outer(freqs, delays))          # (K, n_delay)
        B = np.exp(2j * np.pi * np.outer(times, dopplers))         # (T, n_dop)
        Y = H.T                                                    # (K, T)
        norm = n_k * n_t

        def component(d_idx, v_idx, amp):
            return amp * np.outer(A[:, d_idx], B[:, v_idx])

        def refine(X, v_idx):
            d_idx = int(np.argmax(np.abs(A.conj().T @ (X @ B[:, v_idx].conj())) ** 2))
            v_idx = int(np.argmax(np.abs((A[:, d_idx].conj() @ X) @ B.conj()) ** 2))
            amp = (A[:, d_idx].conj() @ X @ B[:, v_idx].conj()) / norm
            return d_idx, v_idx, amp

        params = []
        recon = np.zeros_like(Y)
        for _ in range(self.n_paths):
            R = Y - recon
            score = np.abs(A.conj().T @ R @ B.conj()) ** 2
            d_idx, v_idx = np.unravel_index(int(np.argmax(score)), score.shape)
            amp = (A[:, d_idx].conj() @ R @ B[:, v_idx].conj()) / norm
            params.append((int(d_idx), int(v_idx), amp))
            recon = recon + component(*params[-1])

        history = [float(np.sum(np.abs(Y - recon) ** 2))]
        n_iter = 0
        for n_iter in range(1, self.max_iter + 1):
            for i in range(self.n_paths):
                X = Y - recon + component(*params[i])
                params[i] = refine(X, params[i][1])
                recon = Y - X + component(*params[i])
            history.append(float(np.sum(np.abs(Y - recon) ** 2)))
            prev, cur = history[-2], history[-1]
            if prev <= 0 or (prev - cur) / prev < self.tol:
                break

        self.paths_ = [PathEstimate(float(delays[d]), float(dopplers[v]), complex(a)) for d, v, a in params]
        self.residual_history_ = np.array(history)
        self.n_iter_ = n_iter
        self.delay_grid_ = delays
        self.doppler_grid_ = dopplers
        return self

    def predict(self, times, tones=None):
        """Reconstructed CSI snapshots (T, n_tones) from the fitted paths."""
        times = np.asarray(times, dtype=float)
        tones = np.arange(-26, 27)[np.arange(-26, 27) != 0] if tones is None else np.asarray(tones)
        return reconstruct(self.paths_, times, tones, self.subcarrier_spacing)


def reconstruct(paths, times, tones, subcarrier_spacing=312.5e3) -> np.ndarray:
    freqs = np.asarray(tones) * subcarrier_spacing
    out = np.zeros((len(times), len(freqs)), dtype=complex)
    for p in paths:
        out += p.amplitude * np.outer(np.exp(2j * np.pi * p.doppler * np.asarray(times)),
                                      np.exp(-2j * np.pi * freqs * p.delay))
    return out


def sage_estimate(csi_snapshots, times=None, n_paths: int = 1, **grid) -> list[PathEstimate]:
    """Functional wrapper around :class:`SageEstimator`.

    ``csi_snapshots`` is a sequence of CsiEstimate (DC excluded automatically)
    or a (T, n_tones) array; ``grid`` forwards estimator settings.
    """
    snaps = list(csi_snapshots)
    if snaps and isinstance(snaps[0], CsiEstimate):
        keep = np.arange(-26, 27) != 0
        H = np.array([s.tones[keep] for s in snaps])
        tones = np.arange(-26, 27)[keep]
    else:
        H = np.atleast_2d(np.asarray(snaps, dtype=complex))
        tones = grid.pop("tones", None)
    return SageEstimator(n_paths=n_paths, **grid).fit(H, times, tones).paths_


# feature library ---------------------------------------------------------------


class LibraryWriteError(RuntimeError):
    """Raised when a record cannot be appended to the feature library."""


RECORD_FIELDS = ("label", "seed", "rms_ds_ns", "mean_delay_ns", "path_loss_db",
                 "n_sig_paths", "snr_db", "timestamp")


class FeatureLibrary:
    """Append-only newline-delimited JSON store of channel-feature records."""

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def record_features(self, scenario_label: str, seed: int, features: ChannelFeatures,
                        timestamp: float | None = None) -> dict:
        record = {
            "label": str(scenario_label),
            "seed": int(seed),
            "rms_ds_ns": features.rms_ds * 1e9,
            "mean_delay_ns": features.mean_delay * 1e9,
            "path_loss_db": features.path_loss_db,
            "n_sig_paths": int(features.n_sig_paths),
            "snr_db": features.snr_db,
            "timestamp": time.time() if timestamp is None else float(timestamp),
        }
        line = json.dumps(record, sort_keys=True) + "\n"
        with self._lock:
            try:
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(line)
            except OSError as exc:
                raise LibraryWriteError(f"cannot append to {self.path}: {exc}") from exc
        return record

    def read(self) -> list[dict]:
        if not self.path.exists():
            return []
        with open(self.path, encoding="utf-8") as fh:
            return [json.loads(line) for line in fh if line.strip()]

    def aggregate(self, field: str = "rms_ds_ns") -> dict[str, dict[str, float]]:
        groups: dict[str, list[float]] = {}
        for rec in self.read():
            groups.setdefault(rec["label"], []).append(rec[field])
        return {label: {"n": len(v), "mean": float(np.mean(v)), "std": float(np.std(v))}
                for label, v in groups.items()}


def record_features(library: FeatureLibrary, scenario_label: str, seed: int,
                    features: ChannelFeatures) -> dict:
    return library.record_features(scenario_label, seed, features)


__all__ = [
    "BIN_SPACING", "ChannelFeatureExtractor", "ChannelFeatures", "FeatureLibrary",
    "LibraryWriteError", "N_BINS", "PathEstimate", "Pdp", "RECORD_FIELDS", "SageEstimator",
    "delay_moments", "extract_features", "pdp_from_csi", "reconstruct", "record_features",
    "sage_estimate",
]
