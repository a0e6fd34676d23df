"""Text rendering of an IVS report in the shape of the experiment summary table."""
from __future__ import annotations

from .ivs import IvsReport

_LABELS = {"EPA": "EPA", "TDL_C": "TDL-C", "TDL_E": "TDL-E"}


def render_table(report: IvsReport) -> str:
    head = f"{'Scenario':<9}{'SNR':>6}{'TN.SI':>7}{'Corr.C':>8}{'AVT.T':>8}{'AVT.ICSC':>10}{'Perf.Imp':>10}"
    rule = "-" * len(head)
    lines = ["ICSC experiment statistical results (throughput in Mbit/s)", rule, head, rule]
    for r in report.rows:
        lines.append(f"{_LABELS.get(r.scenario, r.scenario):<9}{r.snr_db:>6.1f}{r.tn_si:>7d}{r.corr_c:>8d}"
                     f"{r.avt_baseline:>8.2f}{r.avt_icsc:>10.2f}{r.perf_imp:>9.1f}%")
    lines.append(rule)
    n = sum(r.tn_si for r in report.rows)
    c = sum(r.corr_c for r in report.rows)
    lines.append(f"{'Overall':<9}{'':>6}{n:>7d}{c:>8d}{report.avt_baseline:>8.2f}{report.avt_icsc:>10.2f}"
                 f"{report.perf_imp:>9.1f}%")
    lines.append(rule)
    lines.append(f"BER baseline {report.ber_baseline:.3e}   BER ICSC {report.ber_icsc:.3e}")
    lines.append(f"config {report.config_hash}   master seed {report.seeds.get('master')}")
    for key, value in sorted(report.metadata.items()):
        lines.append(f"{key}: {value}")
    return "\n".join(lines) + "\n"
