"""Evaluation report writers: JSON, flat TSV, and PNG figures.

The JSON document carries a config echo plus all metric values rounded to
4 decimals; the TSV flattens overall/segment/horizon rows for easy
tabulation; figures chart the same numbers for quick visual inspection.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluation import EvalReport, HorizonReport, SegmentReport

_TSV_COLUMNS = ("scope", "t_lo", "t_hi", "queries", "missed", "mrr", "hit@1", "hit@3", "hit@10")


def build_report_document(
    overall: EvalReport,
    segments: list[SegmentReport] | None = None,
    horizon: list[HorizonReport] | None = None,
    config_echo: dict | None = None,
) -> dict:
    doc = {
        "config": config_echo or {},
        "overall": overall.to_dict(),
        "segments": [
            {"segment": i + 1, "t_lo": s.t_lo, "t_hi": s.t_hi, **s.report.to_dict()}
            for i, s in enumerate(segments or [])
        ],
        "horizon": [
            {"k": h.k, "t_lo": h.t_lo, "t_hi": h.t_hi, "empty": h.empty, **h.report.to_dict()}
            for h in (horizon or [])
        ],
    }
    return doc


def write_report_json(doc: dict, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _tsv_row(scope: str, t_lo, t_hi, metrics: dict) -> str:
    cells = [
        scope,
        "" if t_lo is None else str(t_lo),
        "" if t_hi is None else str(t_hi),
        str(metrics["queries"]),
        str(metrics["missed"]),
    ]
    for key in ("mrr", "hit@1", "hit@3", "hit@10"):
        value = metrics.get(key)
        cells.append("" if value is None else f"{value:.4f}")
    return "\t".join(cells)


def write_report_tsv(doc: dict, path: str | Path) -> None:
    lines = ["\t".join(_TSV_COLUMNS)]
    lines.append(_tsv_row("overall", None, None, doc["overall"]))
    for seg in doc["segments"]:
        lines.append(_tsv_row(f"segment-{seg['segment']}", seg["t_lo"], seg["t_hi"], seg))
    for hor in doc["horizon"]:
        lines.append(_tsv_row(f"horizon-{hor['k']}", hor["t_lo"], hor["t_hi"], hor))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def render_report_figures(doc: dict, out_dir: str | Path) -> list[Path]:
    """Render PNG charts next to the delimited output; returns written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    overall = doc["overall"]
    labels = ["MRR", "Hit@1", "Hit@3", "Hit@10"]
    values = [overall.get(k) for k in ("mrr", "hit@1", "hit@3", "hit@10")]
    if all(v is not None for v in values):
        fig, ax = plt.subplots(figsize=(5, 3.2))
        bars = ax.bar(labels, values, color="#4878a8")
        ax.set_ylim(0, 1)
        ax.set_ylabel("score")
        ax.set_title("Link prediction (filtered)")
        ax.bar_label(bars, fmt="%.3f", fontsize=8)
        fig.tight_layout()
        path = out_dir / "metrics.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)

    segments = [s for s in doc["segments"] if s.get("mrr") is not None]
    if len(segments) > 1:
        fig, ax = plt.subplots(figsize=(5.5, 3.2))
        xs = [s["segment"] for s in segments]
        ax.plot(xs, [s["mrr"] for s in segments], marker="o", color="#4878a8")
        ax.set_xticks(xs)
        ax.set_xlabel("time interval segment")
        ax.set_ylabel("MRR")
        ax.set_title("Interval-segmented prediction")
        fig.tight_layout()
        path = out_dir / "segments_mrr.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)

    horizon = [h for h in doc["horizon"] if h.get("mrr") is not None]
    if horizon:
        fig, ax = plt.subplots(figsize=(5.5, 3.2))
        xs = [h["k"] for h in horizon]
        ax.plot(xs, [h["mrr"] for h in horizon], marker="s", color="#a85448")
        ax.set_xticks(xs)
        ax.set_xlabel("horizon window k")
        ax.set_ylabel("MRR")
        ax.set_title("Long-horizon prediction")
        fig.tight_layout()
        path = out_dir / "horizon_mrr.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)

    return written
