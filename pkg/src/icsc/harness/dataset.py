"""Labelled CSI dataset generation and its JSON container."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..link_sim import SCENARIOS, derive_seed, measure_csi
from ..nnet import decode_array, encode_array
from ..scenario_id import N_TONES, normalize_csi

DATASET_VERSION = 1


@dataclass
class CsiDataset:
    values: np.ndarray       # (n, 53, 2) normalized CSI
    labels: np.ndarray       # (n,) scenario names
    seeds: np.ndarray        # (n,) per-sample generation seed
    snr_db: np.ndarray       # (n,)
    config: dict

    def __len__(self):
        return len(self.labels)

    def class_counts(self) -> dict[str, int]:
        names, counts = np.unique(self.labels, return_counts=True)
        return {str(n): int(c) for n, c in zip(names, counts)}

    def to_dict(self) -> dict:
        return {"version": DATASET_VERSION, "kind": "csi_dataset", "config": self.config,
                "n_tones": N_TONES, "labels": [str(x) for x in self.labels],
                "seeds": [int(x) for x in self.seeds], "snr_db": encode_array(self.snr_db),
                "values": encode_array(self.values)}

    @classmethod
    def from_dict(cls, d) -> CsiDataset:
        if d.get("version") != DATASET_VERSION or d.get("kind") != "csi_dataset":
            raise ValueError("not a CSI dataset of a supported version")
        return cls(decode_array(d["values"]), np.array(d["labels"]), np.array(d["seeds"], dtype=np.int64),
                   decode_array(d["snr_db"]), d.get("config", {}))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> CsiDataset:
        return cls.from_dict(json.loads(Path(path).read_text()))


def generate_dataset(n_per_class: int = 2000, snr_range_db=(10.0, 30.0), seed: int = 0,
                     doppler_hz: float = 50.0, scenarios=SCENARIOS) -> CsiDataset:
    """One LS CSI estimate per sample, each from a fresh channel, noise and SNR draw."""
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    lo, hi = (float(x) for x in snr_range_db)
    values, labels, seeds, snrs = [], [], [], []
    for c, scenario in enumerate(scenarios):
        for i in range(n_per_class):
            sample_seed = derive_seed(seed, "dataset", c, i)
            snr = float(np.random.default_rng(derive_seed(sample_seed, "snr")).uniform(lo, hi))
            csi = measure_csi(scenario, snr, sample_seed, doppler_hz)
            values.append(normalize_csi(csi).values)
            labels.append(scenario)
            seeds.append(sample_seed)
            snrs.append(snr)
    config = {"n_per_class": n_per_class, "snr_range_db": [lo, hi], "seed": seed,
              "doppler_hz": doppler_hz, "scenarios": list(scenarios)}
    return CsiDataset(np.stack(values), np.array(labels), np.array(seeds, dtype=np.int64),
                      np.array(snrs), config)
