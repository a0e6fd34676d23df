"""Software re-creation of the integrated verification system (IVS).

Two arms run over the same schedule. The ICSC arm classifies every received
frame's CSI and asks the D3QN policy for the next MCS; the baseline arm picks
the next MCS from the receiver's SNR estimate alone. Both arms replay the
same per-frame channel, noise and payload seeds, and each records a checksum
of the random streams it consumed so the pairing can be verified.
"""
from __future__ import annotations

import json
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..channel import binned_gains, convolve_time_varying, noise, noise_variance, realize_channel, tdl_profile
from ..decision import config_hash
from ..link_sim import SCENARIOS, derive_seed, random_payload
from ..phy import CRC_BITS, MCS_TABLE, OfdmConfig, data_airtime, frame_length, receive_frame, run_frame_tx
from ..scenario_id import normalize_csi

REPORT_VERSION = 1
METADATA = {
    "airtime": "data OFDM symbols only, preamble excluded",
    "goodput": "CRC-passing payload bits (CRC excluded) per frame airtime, averaged over frames",
    "ber": "bit errors over transmitted information bits (payload and CRC)",
    "si_cadence": "one classification per received frame (ICSC arm)",
    "snr_input": "receiver SNR estimate of the previous frame",
}


@dataclass(frozen=True)
class ScheduleEntry:
    scenario: str
    snr_db: float
    n_frames: int
    seed: int | None = None

    def __post_init__(self):
        if self.n_frames < 1:
            raise ValueError("n_frames must be >= 1")
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")


def schedule_from_config(entries) -> list[ScheduleEntry]:
    return [ScheduleEntry(e["scenario"], float(e["snr_db"]), int(e["n_frames"]), e.get("seed"))
            for e in entries]


@dataclass
class ArmTally:
    frames: int = 0
    goodput_sum: float = 0.0      # bit/s summed over frames
    bit_errors: int = 0
    bits: int = 0
    frame_errors: int = 0
    mcs_counts: list = field(default_factory=lambda: [0] * len(MCS_TABLE))

    def add(self, mcs, crc_ok, bit_errors, n_info, airtime):
        self.frames += 1
        self.goodput_sum += (n_info - CRC_BITS) / airtime if crc_ok else 0.0
        self.bit_errors += bit_errors
        self.bits += n_info
        self.frame_errors += 0 if crc_ok else 1
        self.mcs_counts[mcs] += 1

    @property
    def avt_mbps(self) -> float:
        return self.goodput_sum / self.frames / 1e6 if self.frames else 0.0

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits if self.bits else 0.0


def perf_improvement(avt_icsc: float, avt_baseline: float) -> float:
    return (avt_icsc - avt_baseline) / avt_baseline * 100.0 if avt_baseline > 0 else float("inf")


@dataclass
class ScenarioRow:
    scenario: str
    snr_db: float
    tn_si: int
    corr_c: int
    avt_baseline: float
    avt_icsc: float
    perf_imp: float
    ber_baseline: float
    ber_icsc: float
    mcs_baseline: list
    mcs_icsc: list


@dataclass
class IvsReport:
    rows: list[ScenarioRow]
    avt_baseline: float
    avt_icsc: float
    perf_imp: float
    ber_baseline: float
    ber_icsc: float
    config_hash: str
    seeds: dict
    checksums: dict
    metadata: dict = field(default_factory=lambda: dict(METADATA))

    @property
    def si(self) -> dict[str, dict[str, int]]:
        out: dict[str, dict[str, int]] = {}
        for r in self.rows:
            tally = out.setdefault(r.scenario, {"tn_si": 0, "corr_c": 0})
            tally["tn_si"] += r.tn_si
            tally["corr_c"] += r.corr_c
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(version=REPORT_VERSION, kind="ivs_report", si=self.si)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d) -> IvsReport:
        if d.get("version") != REPORT_VERSION or d.get("kind") != "ivs_report":
            raise ValueError("not an IVS report of a supported version")
        return cls([ScenarioRow(**r) for r in d["rows"]], d["avt_baseline"], d["avt_icsc"], d["perf_imp"],
                   d["ber_baseline"], d["ber_icsc"], d["config_hash"], d["seeds"], d["checksums"],
                   d.get("metadata", {}))

    def save(self, path):
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> IvsReport:
        return cls.from_dict(json.loads(Path(path).read_text()))


class _StreamChecksum:
    def __init__(self):
        self.value = 0

    def update(self, *arrays):
        for a in arrays:
            self.value = zlib.crc32(np.ascontiguousarray(a).tobytes(), self.value)


def _run_arm(entry_seed, entry, decide, mcs, frame_interval_s, n_info, doppler_hz, config,
             classifier=None):
    """One arm over one schedule entry. Returns (tally, final mcs, correct count, checksum)."""
    real = realize_channel(tdl_profile(entry.scenario), doppler_hz, derive_seed(entry_seed, "channel"))
    n_max = frame_length(n_info, 0, config)
    tally, checksum, correct = ArmTally(), _StreamChecksum(), 0
    for f in range(entry.n_frames):
        delays, gains = binned_gains(real, n_max, f * frame_interval_s)
        unit_noise = noise(n_max, 1.0, derive_seed(entry_seed, "noise", f))
        info = random_payload(derive_seed(entry_seed, "payload", f), n_info)
        checksum.update(gains, unit_noise, info)
        tx = run_frame_tx(info, mcs, config).td_samples
        rx_samples = convolve_time_varying(tx, delays, gains[:, :tx.size])
        rx_samples = rx_samples + unit_noise[:tx.size] * np.sqrt(noise_variance(entry.snr_db))
        rx = receive_frame(rx_samples, mcs, config, n_info)
        tally.add(mcs, rx.crc_ok, int(np.count_nonzero(rx.bits != info)), n_info,
                  data_airtime(n_info, mcs, config))
        label = None
        if classifier is not None:
            label = str(classifier.predict(normalize_csi(rx.csi).values)[0])
            correct += label == entry.scenario
        mcs = int(decide(label, rx.csi.snr_est_db))
    return tally, mcs, correct, checksum.value


def run_ivs(schedule, classifier, policy, baseline, seed: int = 0, frame_interval_s: float = 1e-3,
            n_info: int = 1000, doppler_hz: float = 50.0, initial_mcs: int = 0,
            config: OfdmConfig | None = None) -> IvsReport:
    """Scenario-switching experiment over ``schedule``.

    The MCS chosen after the last frame of an entry carries into the next
    entry, so each arm has to react to the scenario switch itself.
    """
    schedule = [e if isinstance(e, ScheduleEntry) else ScheduleEntry(**e) for e in schedule]
    if not schedule:
        raise ValueError("schedule is empty")
    config = config or OfdmConfig()
    arms = {"baseline": (lambda label, snr: baseline.decide(None, snr), None),
            "icsc": (lambda label, snr: policy.decide(label, snr), classifier)}
    state = {name: initial_mcs for name in arms}
    totals = {name: ArmTally() for name in arms}
    checksums = {name: [] for name in arms}
    rows, entry_seeds = [], []
    for i, entry in enumerate(schedule):
        entry_seed = entry.seed if entry.seed is not None else derive_seed(seed, "ivs", i)
        entry_seeds.append(int(entry_seed))
        results = {}
        for name, (decide, clf) in arms.items():
            tally, state[name], correct, crc = _run_arm(entry_seed, entry, decide, state[name],
                                                        frame_interval_s, n_info, doppler_hz, config, clf)
            results[name] = (tally, correct)
            checksums[name].append(f"{crc:08x}")
            total = totals[name]
            total.frames += tally.frames
            total.goodput_sum += tally.goodput_sum
            total.bit_errors += tally.bit_errors
            total.bits += tally.bits
            total.frame_errors += tally.frame_errors
        base, icsc = results["baseline"][0], results["icsc"][0]
        rows.append(ScenarioRow(entry.scenario, entry.snr_db, icsc.frames, results["icsc"][1],
                                base.avt_mbps, icsc.avt_mbps, perf_improvement(icsc.avt_mbps, base.avt_mbps),
                                base.ber, icsc.ber, base.mcs_counts, icsc.mcs_counts))
    base, icsc = totals["baseline"], totals["icsc"]
    settings = {"schedule": [asdict(e) for e in schedule], "seed": seed, "frame_interval_s": frame_interval_s,
                "n_info": n_info, "doppler_hz": doppler_hz, "initial_mcs": initial_mcs}
    return IvsReport(rows, base.avt_mbps, icsc.avt_mbps, perf_improvement(icsc.avt_mbps, base.avt_mbps),
                     base.ber, icsc.ber, config_hash(settings),
                     {"master": int(seed), "entries": entry_seeds}, checksums)
