"""Run artifacts: metric CSVs and static SVG plots.

metrics.csv holds the deterministic per-collection measurements
(iteration, jsd_nats, test_error, n_gen_samples); wall-clock readings go to
the timings.csv sidecar so repeated runs with one seed stay byte-identical.
SVGs are fixed 800x600 static documents without scripting.
"""

from __future__ import annotations

import numpy as np

METRICS_HEADER = "iteration,jsd_nats,test_error,n_gen_samples"
TIMINGS_HEADER = "iteration,wallclock_s"

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

_WIDTH, _HEIGHT = 800, 600
_MARGIN = 70


def _fmt(value) -> str:
    if value is None:
        return ""
    return repr(float(value))


def write_metrics_csv(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(METRICS_HEADER + "\n")
        for r in records:
            fh.write(f"{r.iteration},{_fmt(r.jsd_nats)},{_fmt(r.test_error)},{r.n_gen_samples}\n")


def write_timings_csv(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(TIMINGS_HEADER + "\n")
        for r in records:
            fh.write(f"{r.iteration},{r.wallclock_s:.3f}\n")


def read_metrics_csv(path):
    """Rows as dicts with floats (None for blank fields)."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        for line in fh:
            parts = line.strip().split(",")
            row = {}
            for key, raw in zip(header, parts):
                row[key] = None if raw == "" else float(raw)
            rows.append(row)
    return rows


def _svg_open(title: str) -> list:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {_WIDTH} {_HEIGHT}">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
        f'<text x="{_WIDTH / 2:.0f}" y="30" text-anchor="middle" font-size="18" '
        f'font-family="sans-serif">{title}</text>',
    ]


def _axes(lo, hi):
    """Pixel mapping for data bounds (x_lo, x_hi, y_lo, y_hi)."""
    x_lo, y_lo = lo
    x_hi, y_hi = hi
    span_x = (x_hi - x_lo) or 1.0
    span_y = (y_hi - y_lo) or 1.0

    def to_px(x, y):
        px = _MARGIN + (x - x_lo) / span_x * (_WIDTH - 2 * _MARGIN)
        py = _HEIGHT - _MARGIN - (y - y_lo) / span_y * (_HEIGHT - 2 * _MARGIN)
        return px, py

    return to_px


def _frame(parts, lo, hi, xlabel, ylabel):
    parts.append(
        f'<rect x="{_MARGIN}" y="{_MARGIN}" width="{_WIDTH - 2 * _MARGIN}" '
        f'height="{_HEIGHT - 2 * _MARGIN}" fill="none" stroke="#333"/>')
    labels = [
        (_MARGIN, _HEIGHT - _MARGIN + 20, "start", f"{lo[0]:.3g}"),
        (_WIDTH - _MARGIN, _HEIGHT - _MARGIN + 20, "end", f"{hi[0]:.3g}"),
        (_MARGIN - 8, _HEIGHT - _MARGIN, "end", f"{lo[1]:.3g}"),
        (_MARGIN - 8, _MARGIN + 10, "end", f"{hi[1]:.3g}"),
    ]
    for x, y, anchor, text in labels:
        parts.append(f'<text x="{x:.0f}" y="{y:.0f}" text-anchor="{anchor}" '
                     f'font-size="12" font-family="sans-serif">{text}</text>')
    parts.append(f'<text x="{_WIDTH / 2:.0f}" y="{_HEIGHT - 15}" text-anchor="middle" '
                 f'font-size="14" font-family="sans-serif">{xlabel}</text>')
    parts.append(f'<text x="20" y="{_HEIGHT / 2:.0f}" text-anchor="middle" font-size="14" '
                 f'font-family="sans-serif" transform="rotate(-90 20 {_HEIGHT / 2:.0f})">{ylabel}</text>')


def _legend(parts, names):
    for i, name in enumerate(names):
        y = _MARGIN + 18 + 18 * i
        parts.append(f'<rect x="{_WIDTH - _MARGIN - 150}" y="{y - 10}" width="12" height="12" '
                     f'fill="{PALETTE[i % len(PALETTE)]}"/>')
        parts.append(f'<text x="{_WIDTH - _MARGIN - 132}" y="{y}" font-size="12" '
                     f'font-family="sans-serif">{name}</text>')


def scatter_svg(path, groups, title: str, xlabel: str = "", ylabel: str = ""):
    """Scatter plot of named 2-D point groups: [(name, points n x 2), ...]."""
    pts = np.vstack([np.asarray(p, dtype=np.float64) for _, p in groups])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    to_px = _axes(lo, hi)
    parts = _svg_open(title)
    _frame(parts, lo, hi, xlabel, ylabel)
    for i, (name, points) in enumerate(groups):
        color = PALETTE[i % len(PALETTE)]
        for x, y in np.asarray(points, dtype=np.float64):
            px, py = to_px(x, y)
            parts.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="2.5" fill="{color}" '
                         f'fill-opacity="0.55"/>')
    _legend(parts, [name for name, _ in groups])
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")


def line_svg(path, series, title: str, xlabel: str = "", ylabel: str = ""):
    """Line plot of named (x, y) series: [(name, xs, ys), ...]."""
    all_x = np.concatenate([np.asarray(xs, dtype=np.float64) for _, xs, _ in series])
    all_y = np.concatenate([np.asarray(ys, dtype=np.float64) for _, _, ys in series])
    lo = (all_x.min(), all_y.min())
    hi = (all_x.max(), all_y.max())
    to_px = _axes(lo, hi)
    parts = _svg_open(title)
    _frame(parts, lo, hi, xlabel, ylabel)
    for i, (name, xs, ys) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{to_px(x, y)[0]:.2f},{to_px(x, y)[1]:.2f}" for x, y in zip(xs, ys))
        parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>')
    _legend(parts, [name for name, _, _ in series])
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")
