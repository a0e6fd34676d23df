"""Experiment orchestration: configuration, dataset, link curves, IVS, reports and CLI."""
from .config import ARTIFACTS, DEFAULTS, artifact_path, load_config
from .dataset import CsiDataset, generate_dataset
from .ivs import IvsReport, ScenarioRow, ScheduleEntry, perf_improvement, run_ivs, schedule_from_config
from .link_curve import CurveRow, rows_to_csv, run_link_curve
from .report import render_table
from .sounding_run import sound_channel

__all__ = [
    "ARTIFACTS", "CsiDataset", "CurveRow", "DEFAULTS", "IvsReport", "ScenarioRow", "ScheduleEntry",
    "artifact_path", "generate_dataset", "load_config", "perf_improvement", "render_table", "rows_to_csv",
    "run_ivs", "run_link_curve", "schedule_from_config", "sound_channel",
]
