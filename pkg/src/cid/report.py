"""Output files for a ranking run: box-plot SVG, CSV/JSON tables."""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from .importance import ImportanceEstimate

PANEL_W = 320
PANEL_H = 240
MARGIN = dict(left=56, right=16, top=34, bottom=42)
BOX_FILL = "#9ecae1"
STROKE = "#08306b"


def box_stats(values: np.ndarray) -> dict[str, float]:
    """Quartiles, whiskers at the furthest points within 1.5 IQR, and outliers."""
    v = np.sort(np.asarray(values, dtype=float))
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = v[(v >= lo_fence) & (v <= hi_fence)]
    return {
        "q1": float(q1),
        "median": float(med),
        "q3": float(q3),
        "whisker_lo": float(inside.min()),
        "whisker_hi": float(inside.max()),
        "outliers": v[(v < lo_fence) | (v > hi_fence)].tolist(),
    }


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** np.floor(np.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    start = np.ceil(lo / step) * step
    return [float(t) for t in np.arange(start, hi + step * 1e-9, step)]


def _panel(est: ImportanceEstimate, x0: float, y0: float) -> list[str]:
    order = est.ranking
    stats = [box_stats(est.per_subsample[i]) for i in order]
    lo = min(min(s["whisker_lo"], *s["outliers"]) if s["outliers"] else s["whisker_lo"] for s in stats)
    hi = max(max(s["whisker_hi"], *s["outliers"]) if s["outliers"] else s["whisker_hi"] for s in stats)
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad
    pl, pt = x0 + MARGIN["left"], y0 + MARGIN["top"]
    pw = PANEL_W - MARGIN["left"] - MARGIN["right"]
    ph = PANEL_H - MARGIN["top"] - MARGIN["bottom"]

    def sy(v):
        return pt + ph * (hi - v) / (hi - lo)

    out = [
        f'<g class="panel" data-method="{escape(est.method)}">',
        f'<text x="{x0 + PANEL_W / 2:.1f}" y="{y0 + 20:.1f}" text-anchor="middle" font-size="13">{escape(est.method)}</text>',
        f'<rect x="{pl:.1f}" y="{pt:.1f}" width="{pw:.1f}" height="{ph:.1f}" fill="none" stroke="#888"/>',
    ]
    for t in _nice_ticks(lo, hi):
        y = sy(t)
        out.append(f'<line x1="{pl - 4:.1f}" y1="{y:.1f}" x2="{pl:.1f}" y2="{y:.1f}" stroke="#888"/>')
        out.append(f'<text x="{pl - 6:.1f}" y="{y + 3:.1f}" text-anchor="end" font-size="9">{t:.3g}</text>')
    if lo < 0 < hi:
        out.append(f'<line x1="{pl:.1f}" y1="{sy(0):.1f}" x2="{pl + pw:.1f}" y2="{sy(0):.1f}" stroke="#ccc" stroke-dasharray="3,3"/>')
    slot = pw / len(order)
    half = 0.3 * slot
    for k, (i, s) in enumerate(zip(order, stats)):
        cx = pl + slot * (k + 0.5)
        out.append(f'<g class="box" data-feature="{escape(est.feature_names[i])}">')
        out.append(f'<line x1="{cx:.1f}" y1="{sy(s["whisker_hi"]):.1f}" x2="{cx:.1f}" y2="{sy(s["q3"]):.1f}" stroke="{STROKE}"/>')
        out.append(f'<line x1="{cx:.1f}" y1="{sy(s["q1"]):.1f}" x2="{cx:.1f}" y2="{sy(s["whisker_lo"]):.1f}" stroke="{STROKE}"/>')
        for w in ("whisker_lo", "whisker_hi"):
            out.append(
                f'<line x1="{cx - half / 2:.1f}" y1="{sy(s[w]):.1f}" x2="{cx + half / 2:.1f}" y2="{sy(s[w]):.1f}" stroke="{STROKE}"/>'
            )
        top, bottom = sy(s["q3"]), sy(s["q1"])
        out.append(
            f'<rect x="{cx - half:.1f}" y="{top:.1f}" width="{2 * half:.1f}" height="{max(bottom - top, 0.5):.1f}" '
            f'fill="{BOX_FILL}" stroke="{STROKE}"/>'
        )
        out.append(f'<line x1="{cx - half:.1f}" y1="{sy(s["median"]):.1f}" x2="{cx + half:.1f}" y2="{sy(s["median"]):.1f}" stroke="#d62728" stroke-width="2"/>')
        for o in s["outliers"]:
            out.append(f'<circle cx="{cx:.1f}" cy="{sy(o):.1f}" r="1.6" fill="none" stroke="{STROKE}"/>')
        out.append("</g>")
        out.append(
            f'<text x="{cx:.1f}" y="{pt + ph + 14:.1f}" text-anchor="middle" font-size="10">{escape(est.feature_names[i])}</text>'
        )
    out.append("</g>")
    return out


def boxplot_svg(estimates: Sequence[ImportanceEstimate], columns: int = 2) -> str:
    """One panel per method, features left to right by decreasing median."""
    columns = max(1, min(columns, len(estimates)))
    rows = -(-len(estimates) // columns)
    width, height = columns * PANEL_W, rows * PANEL_H
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for k, est in enumerate(estimates):
        parts.extend(_panel(est, (k % columns) * PANEL_W, (k // columns) * PANEL_H))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_figure(estimates: Sequence[ImportanceEstimate], path: str | Path) -> None:
    Path(path).write_text(boxplot_svg(estimates))


def write_scores_csv(scores: dict[str, dict], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "correlation", "degenerate", "n_subsets", "cycle_time_s"])
        for method, row in scores.items():
            w.writerow(
                [method, repr(float(row["correlation"])), int(row["degenerate"]), row["n_subsets"], repr(float(row["cycle_time_s"]))]
            )
