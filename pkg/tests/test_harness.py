import csv
import io
import json

import numpy as np
import pytest
import yaml

from icsc.decision import SnrThresholdPolicy, load_policy
from icsc.harness import cli
from icsc.harness.config import DEFAULTS, artifact_path, dump_config, load_config
from icsc.harness.dataset import CsiDataset, generate_dataset
from icsc.harness.ivs import IvsReport, ScheduleEntry, perf_improvement, run_ivs
from icsc.harness.link_curve import FIELDS, fer_ci95, rows_to_csv, run_link_curve
from icsc.harness.report import render_table
from icsc.phy import MCS_TABLE
from icsc.scenario_id import ScenarioClassifier
from icsc.sounding import FeatureLibrary

SMALL = {
    "dataset": {"n_per_class": 60},
    "scenario_id": {"epochs": 2, "n_conv": 2, "filters": 8},
    "goodput": {"n_frames": 4, "snr_grid_db": [0, 10, 20, 30]},
    "d3qn": {"episodes": 50, "eps_decay_episodes": 30, "episode_length": 4, "batch_size": 16},
    "ivs": {"schedule": [{"scenario": "EPA", "snr_db": 18, "n_frames": 10},
                         {"scenario": "TDL_E", "snr_db": 26, "n_frames": 10}]},
    "link_curve": {"n_frames": 2, "mcs": [0, 4], "snr_grid_db": [10, 20], "scenarios": ["AWGN", "EPA"]},
    "sage": {"n_snapshots": 5},
}
PIPELINE = ["gen-dataset", "train-si", "build-goodput", "train-d3qn", "run-ivs", "report", "link-curve", "sage"]


def run_pipeline(config_path, out_dir, capsys, seed=7):
    outputs = {}
    for cmd in PIPELINE:
        code = cli.main([cmd, "--config", str(config_path), "--seed", str(seed), "--out-dir", str(out_dir)])
        out = capsys.readouterr().out
        assert code == 0, cmd
        outputs[cmd] = out
    return outputs


@pytest.fixture(scope="module")
def small_config(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "small.yaml"
    path.write_text(yaml.safe_dump(SMALL))
    return path


# config ---------------------------------------------------------------------------------

def test_config_merge_and_overrides(small_config):
    cfg = load_config(small_config, seed=11, out_dir="x")
    assert cfg["seed"] == 11 and cfg["out_dir"] == "x"
    assert cfg["dataset"]["n_per_class"] == 60
    assert cfg["dataset"]["snr_range_db"] == DEFAULTS["dataset"]["snr_range_db"]
    assert load_config()["d3qn"] == DEFAULTS["d3qn"]
    assert yaml.safe_load(dump_config(cfg)) == json.loads(json.dumps(cfg))
    assert artifact_path(cfg, "ivs_report").name == "ivs_report.json"


def test_config_rejects_unknown_keys(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("d3qn: {epsiodes: 3}\n")
    with pytest.raises(ValueError, match="d3qn.epsiodes"):
        load_config(bad)
    bad.write_text("dataset: 5\n")
    with pytest.raises(ValueError):
        load_config(bad)


# dataset --------------------------------------------------------------------------------

def test_dataset_counts_roundtrip_and_byte_identity(tmp_path):
    a = generate_dataset(n_per_class=8, seed=3)
    b = generate_dataset(n_per_class=8, seed=3)
    assert a.class_counts() == {"EPA": 8, "TDL_C": 8, "TDL_E": 8} and len(a) == 24
    a.save(tmp_path / "a.json")
    b.save(tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    loaded = CsiDataset.load(tmp_path / "a.json")
    assert np.array_equal(loaded.values, a.values) and list(loaded.labels) == list(a.labels)
    assert np.all((a.snr_db >= 10) & (a.snr_db <= 30))
    assert not np.array_equal(generate_dataset(n_per_class=8, seed=4).values, a.values)
    with pytest.raises(ValueError):
        generate_dataset(n_per_class=0)


def test_dataset_classes_differ_in_frequency_selectivity():
    """Mean tone-to-tone CSI variation orders the classes by delay spread: TDL_E < EPA < TDL_C."""
    data = generate_dataset(n_per_class=40, seed=0)
    h = data.values[..., 0] + 1j * data.values[..., 1]
    rough = np.mean(np.abs(np.diff(h, axis=1)) ** 2, axis=1)
    means = {c: rough[data.labels == c].mean() for c in ("EPA", "TDL_C", "TDL_E")}
    assert means["TDL_E"] < means["EPA"] < means["TDL_C"]


# link curves -----------------------------------------------------------------------------

def test_link_curve_rows_and_csv():
    rows = run_link_curve(mcs=[0, 8], scenarios=["AWGN"], snr_grid=[0, 30], n_frames=6, seed=1)
    assert len(rows) == 4
    by = {(r.mcs, r.snr_db): r for r in rows}
    assert by[(0, 30.0)].fer == 0.0 and by[(0, 30.0)].goodput_mbps == pytest.approx(MCS_TABLE[0].phy_rate / 1e6)
    assert by[(8, 0.0)].fer == 1.0
    parsed = list(csv.DictReader(io.StringIO(rows_to_csv(rows))))
    assert tuple(parsed[0]) == FIELDS and len(parsed) == 4
    with pytest.raises(ValueError):
        run_link_curve(n_frames=0)


def test_fer_confidence_interval_shrinks_as_inverse_sqrt_n():
    assert fer_ci95(0.2, 400) == pytest.approx(fer_ci95(0.2, 100) / 2)
    assert fer_ci95(0.0, 50) == 0.0


# IVS --------------------------------------------------------------------------------------

class FixedPolicy:
    def __init__(self, mcs):
        self.mcs = mcs

    def decide(self, scenario, snr_db):
        return self.mcs


class LabelClassifier:
    """Stand-in classifier that always answers with one label."""

    def __init__(self, label):
        self.label = label

    def predict(self, X):
        return np.array([self.label] * len(np.atleast_3d(X)))


def test_ivs_paired_arms_and_arithmetic():
    schedule = [ScheduleEntry("EPA", 25.0, 6), ScheduleEntry("TDL_C", 12.0, 6)]
    report = run_ivs(schedule, LabelClassifier("EPA"), FixedPolicy(2), FixedPolicy(1), seed=2)
    assert report.checksums["baseline"] == report.checksums["icsc"]
    assert report.perf_imp == pytest.approx((report.avt_icsc - report.avt_baseline) / report.avt_baseline * 100)
    assert 0 <= report.avt_baseline <= 72 and 0 <= report.avt_icsc <= 72
    assert report.si == {"EPA": {"tn_si": 6, "corr_c": 6}, "TDL_C": {"tn_si": 6, "corr_c": 0}}
    # after the initial MCS0 frame, each arm only uses its policy's MCS
    assert report.rows[0].mcs_icsc[2] == 5 and report.rows[1].mcs_icsc[2] == 6
    assert report.rows[0].mcs_baseline[0] == 1


def test_ivs_identical_policies_give_zero_improvement():
    schedule = [ScheduleEntry("TDL_E", 20.0, 5)]
    report = run_ivs(schedule, LabelClassifier("TDL_E"), FixedPolicy(3), FixedPolicy(3), seed=1)
    assert report.avt_icsc == report.avt_baseline and report.perf_imp == 0.0
    assert report.ber_icsc == report.ber_baseline


def test_ivs_report_roundtrip_and_table(tmp_path):
    report = run_ivs([ScheduleEntry("EPA", 30.0, 3)], LabelClassifier("EPA"), FixedPolicy(0), FixedPolicy(0))
    report.save(tmp_path / "r.json")
    again = IvsReport.load(tmp_path / "r.json")
    assert again.to_json() == report.to_json()
    text = render_table(report)
    assert "EPA" in text and "Overall" in text and report.config_hash in text


def test_ivs_validation():
    with pytest.raises(ValueError):
        ScheduleEntry("UMa", 10.0, 5)
    with pytest.raises(ValueError):
        ScheduleEntry("EPA", 10.0, 0)
    with pytest.raises(ValueError):
        run_ivs([], None, FixedPolicy(0), FixedPolicy(0))
    assert perf_improvement(11.0, 10.0) == pytest.approx(10.0)


# CLI ----------------------------------------------------------------------------------------

def test_cli_missing_artifact_names_it(tmp_path, capsys):
    code = cli.main(["run-ivs", "--out-dir", str(tmp_path)])
    err = capsys.readouterr().err
    assert code != 0 and "classifier" in err and "train-si" in err
    assert cli.main(["train-d3qn", "--out-dir", str(tmp_path)]) != 0
    assert "goodput_table" in capsys.readouterr().err


def test_cli_bad_config_exits_nonzero(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("nonsense_section: {}\n")
    assert cli.main(["gen-dataset", "--config", str(bad), "--out-dir", str(tmp_path)]) != 0
    assert "nonsense_section" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        cli.main(["no-such-command"])


def test_small_pipeline_runs_and_is_deterministic(small_config, tmp_path, capsys):
    first = run_pipeline(small_config, tmp_path / "a", capsys)
    run_pipeline(small_config, tmp_path / "b", capsys)
    for cmd, out in first.items():
        paths = [line for line in out.splitlines() if line.startswith(str(tmp_path))]
        assert paths, cmd
        for p in paths:
            assert (tmp_path / "a").joinpath(p.split("/")[-1]).exists()
    for name in ["dataset.json", "classifier.json", "goodput_table.json", "d3qn_policy.json",
                 "baseline_policy.json", "ivs_report.json", "link_curve.csv", "sage_paths.json"]:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name
    report = IvsReport.load(tmp_path / "a" / "ivs_report.json")
    assert report.checksums["baseline"] == report.checksums["icsc"]
    assert isinstance(load_policy(tmp_path / "a" / "baseline_policy.json"), SnrThresholdPolicy)
    assert ScenarioClassifier.load(tmp_path / "a" / "classifier.json").classes_.size == 3
    lib = FeatureLibrary(tmp_path / "a" / "features.ndjson").read()
    assert len(lib) == SMALL["sage"]["n_snapshots"]
    sage = json.loads((tmp_path / "a" / "sage_paths.json").read_text())
    assert len(sage["paths"]) == DEFAULTS["sage"]["n_paths"]
