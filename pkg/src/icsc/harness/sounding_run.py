"""Channel sounding driver: CSI snapshots of one channel draw, SAGE paths and PDP features."""
from __future__ import annotations

import numpy as np

from ..channel import realize_channel, tdl_profile
from ..link_sim import derive_seed, received_preamble
from ..phy import OfdmConfig, estimate_csi_ls, ofdm_demodulate
from ..sounding import FeatureLibrary, SageEstimator, extract_features, pdp_from_csi


def sound_channel(scenario: str = "EPA", snr_db: float = 30.0, n_snapshots: int = 20,
                  snapshot_interval_s: float = 1e-3, n_paths: int = 4, max_delay_s: float = 1e-6,
                  static: bool = False, doppler_hz: float = 50.0, seed: int = 0,
                  library: FeatureLibrary | None = None, config: OfdmConfig | None = None) -> dict:
    """Sound ``scenario`` with preamble snapshots and return paths, true taps and features.

    Features of every snapshot are appended to ``library`` when given.
    """
    config = config or OfdmConfig()
    real = realize_channel(tdl_profile(scenario), 0.0 if static else doppler_hz, derive_seed(seed, "channel"))
    times = np.arange(n_snapshots) * snapshot_interval_s
    snapshots, features = [], []
    for k, t in enumerate(times):
        rx = received_preamble(real, snr_db, derive_seed(seed, "noise", k), config, start_time=t)
        csi = estimate_csi_ls(ofdm_demodulate(rx, config), config)
        snapshots.append(csi.tones)
        feat = extract_features(pdp_from_csi(csi, config=config), csi)
        features.append(feat)
        if library is not None:
            library.record_features(scenario, seed, feat, timestamp=float(t))
    # SAGE works on measured tones only; DC (index 26) is interpolated
    measured = np.delete(np.array(snapshots), 26, axis=1)
    sage = SageEstimator(n_paths=n_paths, max_delay=max_delay_s).fit(measured, times)
    return {
        "scenario": scenario, "snr_db": snr_db, "seed": seed, "times_s": times.tolist(),
        "paths": [{"delay_ns": p.delay * 1e9, "doppler_hz": p.doppler,
                   "power_db": float(10 * np.log10(max(abs(p.amplitude) ** 2, 1e-30)))}
                  for p in sage.paths_],
        "residual_history": [float(r) for r in sage.residual_history_],
        "n_iter": int(sage.n_iter_),
        "profile_taps": {"delay_ns": (real.profile.tap_delays * 1e9).tolist(),
                         "power_db": real.profile.tap_powers_db.tolist()},
        "mean_rms_ds_ns": float(np.mean([f.rms_ds for f in features]) * 1e9),
        "profile_rms_ds_ns": real.profile.rms_delay_spread() * 1e9,
    }
