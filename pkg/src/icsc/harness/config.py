"""Experiment configuration: one YAML file with a section per stage and a master seed.

Every stochastic quantity is derived from ``seed`` through
``icsc.link_sim.derive_seed``; a file only needs to list the keys it overrides.
"""
from __future__ import annotations

import copy
import json
from pathlib import Path

import yaml

DEFAULTS: dict = {
    "seed": 0,
    "out_dir": "artifacts",
    "channel": {"doppler_hz": 50.0},
    "dataset": {"n_per_class": 2000, "snr_range_db": [10.0, 30.0]},
    "scenario_id": {"n_conv": 5, "filters": 32, "kernel": 9, "batch_size": 100, "epochs": 50,
                    "learning_rate": 1e-3, "validation_fraction": 0.2},
    "goodput": {"snr_grid_db": list(range(0, 31, 2)), "n_frames": 500, "n_info": 1000},
    "d3qn": {"episodes": 1500, "batch_size": 128, "learning_rate": 5e-4, "gamma": 0.0,
             "episode_length": 16, "eps_decay_episodes": 1000, "target_update": 100,
             "buffer_capacity": 10000, "reward": "ratio"},
    "baseline": {"rule": "argmax"},
    "ivs": {"schedule": [{"scenario": "EPA", "snr_db": 18.0, "n_frames": 500},
                         {"scenario": "TDL_C", "snr_db": 20.0, "n_frames": 500},
                         {"scenario": "TDL_E", "snr_db": 26.0, "n_frames": 500}],
            "frame_interval_s": 1e-3, "n_info": 1000, "initial_mcs": 0},
    "link_curve": {"scenarios": ["AWGN", "EPA", "TDL_C", "TDL_E"], "mcs": list(range(9)),
                   "snr_grid_db": list(range(0, 31, 2)), "n_frames": 200, "n_info": 1000},
    "sage": {"scenario": "EPA", "snr_db": 30.0, "n_snapshots": 20, "snapshot_interval_s": 1e-3,
             "n_paths": 4, "max_delay_s": 1.0e-6, "static": False},
}

ARTIFACTS = {
    "dataset": "dataset.json",
    "classifier": "classifier.json",
    "goodput_table": "goodput_table.json",
    "d3qn_policy": "d3qn_policy.json",
    "baseline_policy": "baseline_policy.json",
    "ivs_report": "ivs_report.json",
    "ivs_table": "ivs_report.txt",
    "link_curve": "link_curve.csv",
    "sage_paths": "sage_paths.json",
    "feature_library": "features.ndjson",
    "si_history": "si_history.csv",
    "d3qn_history": "d3qn_history.csv",
}


def _merge(base: dict, override: dict, path="") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in base:
            raise ValueError(f"unknown config key {path + key!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ValueError(f"config key {path + key!r} must be a mapping")
            out[key] = _merge(base[key], value, f"{path}{key}.")
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path=None, seed: int | None = None, out_dir=None) -> dict:
    """Defaults overlaid with the YAML file at ``path`` and explicit overrides."""
    config = copy.deepcopy(DEFAULTS)
    if path is not None:
        text = Path(path).read_text()
        data = yaml.safe_load(text) or {}
        if not isinstance(data, dict):
            raise ValueError(f"{path}: top level must be a mapping")
        config = _merge(config, data)
    if seed is not None:
        config["seed"] = int(seed)
    if out_dir is not None:
        config["out_dir"] = str(out_dir)
    return config


def artifact_path(config: dict, name: str) -> Path:
    return Path(config["out_dir"]) / ARTIFACTS[name]


def dump_config(config: dict) -> str:
    return yaml.safe_dump(json.loads(json.dumps(config)), sort_keys=False)
