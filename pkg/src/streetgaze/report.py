"""Report bundle: plain-text tables, a similarity CSV, JSON, and static HTML.

The HTML page carries the top-10 object bar charts per image group for each
metric plus the method-similarity table; bars are plain CSS so the bundle
stays deterministic and dependency-free.
"""

from __future__ import annotations

import csv
import html
import json
from pathlib import Path

from .similarity import CAM_METHODS


def _fmt(value, digits=4):
    return "" if value is None else f"{value:.{digits}f}"


def similarity_rows(report):
    rows = []
    for method in CAM_METHODS:
        s = report.means[method]
        rows.append({
            "method": method,
            "l2": s.l2,
            "lpips": s.lpips,
            "cosine": s.cosine,
            "bold_l2": method in report.bold["l2"],
            "bold_lpips": method in report.bold["lpips"],
            "bold_cosine": method in report.bold["cosine"],
        })
    return rows


def write_similarity_csv(path, report) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["Model Name", "Loss", "LPIPS Score", "Cosine Similarity"])
        for row in similarity_rows(report):
            writer.writerow([
                row["method"], _fmt(row["l2"]), _fmt(row["lpips"]), _fmt(row["cosine"]),
            ])


def text_report(summary, rankings, report) -> str:
    lines = []
    lines.append("streetgaze pipeline report")
    lines.append("=" * 40)
    lines.append(f"images segmented        : {summary['images']}")
    lines.append(f"images with gaze        : {summary['images_with_gaze']}")
    lines.append(f"group sizes             : {summary['groups']}")
    lines.append("")
    for key in sorted(rankings):
        lines.append(f"top objects -- {key}")
        lines.append("-" * 40)
        for rank, (idx, name, value) in enumerate(rankings[key], start=1):
            lines.append(f"{rank:>3}. {name:<22} [{idx:>3}] {value:.4f}")
        lines.append("")
    if report is not None:
        lines.append("method similarity (lower Loss/LPIPS better, higher Cosine better)")
        lines.append("-" * 66)
        lines.append(f"{'Model Name':<17}{'Loss':>9}{'LPIPS':>9}{'Cosine':>9}")
        for row in similarity_rows(report):
            mark = lambda flag: "*" if flag else " "
            lines.append(
                f"{row['method']:<17}"
                f"{_fmt(row['l2']):>8}{mark(row['bold_l2'])}"
                f"{_fmt(row['lpips']) or '   --':>8}{mark(row['bold_lpips'])}"
                f"{_fmt(row['cosine']):>8}{mark(row['bold_cosine'])}"
            )
        lines.append("(* = top 2 most similar in that column)")
        if report.tied_columns:
            lines.append(f"tied columns resolved by name order: {sorted(report.tied_columns)}")
        lines.append("")
    return "\n".join(lines) + "\n"


def _bar_chart(title: str, entries) -> str:
    peak = max((v for _, _, v in entries), default=1.0) or 1.0
    bars = []
    for idx, name, value in entries:
        width = max(1.0, 100.0 * value / peak)
        bars.append(
            f'<div class="row"><span class="label">{html.escape(name)}</span>'
            f'<span class="bar" style="width:{width:.1f}%"></span>'
            f'<span class="val">{value:.4f}</span></div>'
        )
    return (
        f'<section><h3>{html.escape(title)}</h3>' + "".join(bars) + "</section>"
    )


_CSS = """
body { font-family: sans-serif; margin: 2em; max-width: 70em; }
section { margin-bottom: 1.5em; }
.row { display: flex; align-items: center; margin: 2px 0; }
.label { width: 12em; font-size: 0.85em; }
.bar { background: #4a78b0; height: 0.9em; display: inline-block; }
.val { margin-left: 0.5em; font-size: 0.8em; color: #444; }
table { border-collapse: collapse; }
td, th { border: 1px solid #999; padding: 0.3em 0.8em; text-align: right; }
td:first-child, th:first-child { text-align: left; }
.bold { font-weight: bold; }
"""


def html_report(summary, rankings, report) -> str:
    parts = [
        "<!DOCTYPE html><html><head><meta charset='utf-8'>",
        "<title>streetgaze report</title>",
        f"<style>{_CSS}</style></head><body>",
        "<h1>streetgaze pipeline report</h1>",
        f"<p>{summary['images']} images segmented, "
        f"{summary['images_with_gaze']} with gaze data. "
        f"Groups: {html.escape(json.dumps(summary['groups']))}</p>",
    ]
    for key in sorted(rankings):
        parts.append(_bar_chart(f"Top objects — {key}", rankings[key]))
    if report is not None:
        parts.append("<h2>Method similarity</h2>")
        parts.append(
            "<table><tr><th>Model Name</th><th>Loss ↓</th>"
            "<th>LPIPS Score ↓</th><th>Cosine Similarity ↑</th></tr>"
        )
        for row in similarity_rows(report):
            def cell(value, bold):
                txt = _fmt(value) if value is not None else "—"
                cls = ' class="bold"' if bold else ""
                return f"<td{cls}>{txt}</td>"
            parts.append(
                "<tr><td>" + html.escape(row["method"]) + "</td>"
                + cell(row["l2"], row["bold_l2"])
                + cell(row["lpips"], row["bold_lpips"])
                + cell(row["cosine"], row["bold_cosine"])
                + "</tr>"
            )
        parts.append("</table><p>Bold: top 2 most similar per column.</p>")
    parts.append("</body></html>")
    return "".join(parts) + "\n"


def write_reports(manifest, out: Path, segs, heatmaps, vectors, labels, rankings, report) -> dict:
    rdir = out / "report"
    rdir.mkdir(exist_ok=True)
    groups = {}
    for gl in labels:
        groups[gl.group] = groups.get(gl.group, 0) + 1
    summary = {
        "images": len(segs),
        "images_with_gaze": len(heatmaps),
        "groups": {k: groups[k] for k in sorted(groups)},
        "thresholds": [float(t) for t in manifest.params.morh_thresholds],
        "seed": manifest.params.seed,
    }

    (rdir / "report.txt").write_text(
        text_report(summary, rankings, report), encoding="utf-8"
    )
    (rdir / "report.html").write_text(
        html_report(summary, rankings, report), encoding="utf-8"
    )
    if report is not None:
        write_similarity_csv(rdir / "similarity.csv", report)

    bundle = {
        "summary": summary,
        "rankings": {
            key: [{"class_index": i, "class_name": n, "value": v}
                  for i, n, v in entries]
            for key, entries in sorted(rankings.items())
        },
        "groups": {gl.image_id: gl.group for gl in labels},
    }
    if report is not None:
        bundle["similarity"] = {
            "means": {
                m: {"l2": s.l2, "lpips": s.lpips, "cosine": s.cosine}
                for m, s in sorted(report.means.items())
            },
            "bold": report.bold,
            "tied_columns": sorted(report.tied_columns),
        }
    (rdir / "bundle.json").write_text(
        json.dumps(bundle, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return summary
