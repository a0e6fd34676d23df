"""Command-line entry point: ``icsc <subcommand> --config FILE --seed N``.

Artifacts are written under the configured ``out_dir`` and their paths are
printed one per line on stdout. Diagnostics go to stderr; any failure exits
nonzero.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from ..decision import D3QNPolicy, GoodputTable, build_goodput_table, fit_snr_thresholds, load_policy, save_artifact
from ..link_sim import derive_seed
from ..scenario_id import ScenarioClassifier
from ..sounding import FeatureLibrary
from .config import artifact_path, load_config
from .dataset import CsiDataset, generate_dataset
from .ivs import IvsReport, run_ivs, schedule_from_config
from .link_curve import rows_to_csv, run_link_curve
from .report import render_table
from .sounding_run import sound_channel


class MissingArtifact(FileNotFoundError):
    def __init__(self, name: str, path: Path, producer: str):
        super().__init__(f"missing {name} artifact: {path} (run `icsc {producer}` first)")


def _require(config, name, producer) -> Path:
    path = artifact_path(config, name)
    if not path.exists():
        raise MissingArtifact(name, path, producer)
    return path


def _write_history(path, columns: dict):
    keys = list(columns)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index", *keys])
        for i, row in enumerate(zip(*columns.values())):
            writer.writerow([i, *row])


def cmd_gen_dataset(config, args):
    ds_cfg = config["dataset"]
    data = generate_dataset(ds_cfg["n_per_class"], ds_cfg["snr_range_db"], config["seed"],
                            config["channel"]["doppler_hz"])
    path = artifact_path(config, "dataset")
    data.save(path)
    return [path]


def cmd_train_si(config, args):
    data = CsiDataset.load(_require(config, "dataset", "gen-dataset"))
    clf = ScenarioClassifier(**config["scenario_id"], seed=derive_seed(config["seed"], "train_si"),
                             verbose=args.verbose)
    clf.fit(data.values, data.labels)
    path = artifact_path(config, "classifier")
    clf.save(path)
    hist = artifact_path(config, "si_history")
    _write_history(hist, {"loss": clf.history_["loss"], "val_accuracy": clf.history_["val_accuracy"]})
    print(f"validation accuracy {clf.validation_accuracy_:.4f}", file=sys.stderr)
    return [path, hist]


def cmd_build_goodput(config, args):
    g = config["goodput"]
    table = build_goodput_table(snr_grid=g["snr_grid_db"], n_frames=g["n_frames"], seed=config["seed"],
                                doppler_hz=config["channel"]["doppler_hz"], n_info=g["n_info"])
    path = artifact_path(config, "goodput_table")
    table.save(path)
    return [path]


def cmd_train_d3qn(config, args):
    table = GoodputTable.load(_require(config, "goodput_table", "build-goodput"))
    policy = D3QNPolicy(**config["d3qn"], seed=derive_seed(config["seed"], "train_d3qn")).fit(table)
    baseline = fit_snr_thresholds(table, config["baseline"]["rule"])
    paths = [artifact_path(config, "d3qn_policy"), artifact_path(config, "baseline_policy")]
    save_artifact(policy, paths[0])
    save_artifact(baseline, paths[1])
    hist = artifact_path(config, "d3qn_history")
    _write_history(hist, {"mean_reward": policy.reward_history_, "loss": policy.loss_history_})
    print(f"oracle agreement {policy.agreement(table):.4f}", file=sys.stderr)
    return [*paths, hist]


def cmd_link_curve(config, args):
    lc = config["link_curve"]
    rows = run_link_curve(lc["mcs"], lc["scenarios"], lc["snr_grid_db"], lc["n_frames"], config["seed"],
                          config["channel"]["doppler_hz"], lc["n_info"])
    path = artifact_path(config, "link_curve")
    path.write_text(rows_to_csv(rows))
    return [path]


def cmd_run_ivs(config, args):
    clf_path = _require(config, "classifier", "train-si")
    pol_path = _require(config, "d3qn_policy", "train-d3qn")
    base_path = _require(config, "baseline_policy", "train-d3qn")
    ivs = config["ivs"]
    report = run_ivs(schedule_from_config(ivs["schedule"]), ScenarioClassifier.load(clf_path),
                     load_policy(pol_path), load_policy(base_path), seed=config["seed"],
                     frame_interval_s=ivs["frame_interval_s"], n_info=ivs["n_info"],
                     doppler_hz=config["channel"]["doppler_hz"], initial_mcs=ivs["initial_mcs"])
    path, table = artifact_path(config, "ivs_report"), artifact_path(config, "ivs_table")
    report.save(path)
    table.write_text(render_table(report))
    return [path, table]


def cmd_sage(config, args):
    s = config["sage"]
    library = FeatureLibrary(artifact_path(config, "feature_library"))
    result = sound_channel(s["scenario"], s["snr_db"], s["n_snapshots"], s["snapshot_interval_s"],
                           s["n_paths"], s["max_delay_s"], s["static"], config["channel"]["doppler_hz"],
                           config["seed"], library)
    path = artifact_path(config, "sage_paths")
    path.write_text(json.dumps(result, indent=2) + "\n")
    return [path, library.path]


def cmd_report(config, args):
    src = Path(args.input) if args.input else _require(config, "ivs_report", "run-ivs")
    if not src.exists():
        raise MissingArtifact("ivs_report", src, "run-ivs")
    text = render_table(IvsReport.load(src))
    sys.stdout.write(text)
    path = src.with_suffix(".txt")
    path.write_text(text)
    return [path]


COMMANDS = {
    "gen-dataset": (cmd_gen_dataset, "generate the labelled CSI dataset"),
    "train-si": (cmd_train_si, "train the CNN scenario classifier"),
    "build-goodput": (cmd_build_goodput, "Monte Carlo goodput table over scenario x SNR x MCS"),
    "train-d3qn": (cmd_train_d3qn, "train the D3QN policy and fit the SNR-threshold baseline"),
    "link-curve": (cmd_link_curve, "FER/BER/goodput curves as CSV"),
    "run-ivs": (cmd_run_ivs, "run the scenario-switching verification experiment"),
    "sage": (cmd_sage, "sound one channel draw: SAGE paths and PDP features"),
    "report": (cmd_report, "render a stored IVS report as a table"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="icsc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="YAML configuration file (defaults apply to missing keys)")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--out-dir", help="artifact directory (overrides the config)")
        if name == "train-si":
            p.add_argument("--verbose", action="store_true", help="print per-epoch progress")
        if name == "report":
            p.add_argument("--input", help="IVS report JSON (default: the configured artifact)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config, args.seed, args.out_dir)
        Path(config["out_dir"]).mkdir(parents=True, exist_ok=True)
        outputs = COMMANDS[args.command][0](config, args)
    except Exception as exc:  # every failure becomes a diagnostic and a nonzero exit
        print(f"icsc {args.command}: error: {exc}", file=sys.stderr)
        return 1
    for path in outputs:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
