"""Curve files from a scheduler trace: one CSV (canonical) and one SVG per quantity."""

from __future__ import annotations

import csv
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

QUANTITIES = {"val_loss": "validation loss", "lambda": "loss weight", "tau": "threshold"}
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2",
           "#7f7f7f", "#bcbd22", "#17becf")


def curves_from_trace(rows) -> dict[str, tuple[np.ndarray, dict[str, np.ndarray]]]:
    """Group trace rows into ``{quantity: (iterations, {series: values})}``.

    The validation-loss curves gain a ``mean`` series, the pointwise mean over
    attributes.
    """
    if not rows:
        raise ValueError("trace is empty")
    names = list(dict.fromkeys(r["attribute"] for r in rows))
    iters = sorted({int(r["iteration"]) for r in rows})
    pos = {it: k for k, it in enumerate(iters)}
    out = {}
    for q in QUANTITIES:
        series = {n: np.full(len(iters), np.nan) for n in names}
        for r in rows:
            series[r["attribute"]][pos[int(r["iteration"])]] = float(r[q])
        if q == "val_loss":
            series["mean"] = np.mean([series[n] for n in names], axis=0)
        out[q] = (np.array(iters), series)
    return out


def write_curve_csv(path, iters, series) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", *series])
        for k, it in enumerate(iters):
            w.writerow([int(it), *(repr(float(v[k])) for v in series.values())])


def svg_polylines(iters, series, title: str, width: int = 640, height: int = 400) -> str:
    """Minimal line chart: frame, axis extremes, one polyline per series and a legend."""
    left, right, top, bottom = 60, 130, 30, 40
    pw, ph = width - left - right, height - top - bottom
    x = np.asarray(iters, dtype=float)
    ys = np.concatenate([np.asarray(v, dtype=float) for v in series.values()])
    ys = ys[np.isfinite(ys)]
    x0, x1 = float(x.min()), float(x.max())
    y0, y1 = (float(ys.min()), float(ys.max())) if ys.size else (0.0, 1.0)
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5

    def px(v):
        return left + (v - x0) / (x1 - x0) * pw

    def py(v):
        return top + (y1 - v) / (y1 - y0) * ph

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'font-family="sans-serif" font-size="11">',
             f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
             f'<text x="{left}" y="{top - 10}" font-size="13">{escape(title)}</text>',
             f'<text x="{left}" y="{height - 12}">{x0:g}</text>',
             f'<text x="{left + pw}" y="{height - 12}" text-anchor="end">{x1:g}</text>',
             f'<text x="{left - 4}" y="{top + ph}" text-anchor="end">{y0:.3g}</text>',
             f'<text x="{left - 4}" y="{top + 10}" text-anchor="end">{y1:.3g}</text>']
    for k, (name, vals) in enumerate(series.items()):
        color = _COLORS[k % len(_COLORS)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, vals) if np.isfinite(b))
        dash = ' stroke-dasharray="5,3"' if name == "mean" else ""
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} '
                     f'points="{pts}"/>')
        ly = top + 14 * k + 8
        parts.append(f'<line x1="{left + pw + 10}" y1="{ly}" x2="{left + pw + 28}" y2="{ly}" '
                     f'stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{left + pw + 32}" y="{ly + 4}">{escape(name)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def plot_curves(rows, out_dir) -> list[Path]:
    """Write ``<quantity>.csv`` and ``<quantity>.svg`` for each traced quantity."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for q, (iters, series) in curves_from_trace(rows).items():
        csv_path, svg_path = out_dir / f"{q}.csv", out_dir / f"{q}.svg"
        write_curve_csv(csv_path, iters, series)
        svg_path.write_text(svg_polylines(iters, series, f"{QUANTITIES[q]} per attribute"))
        written += [csv_path, svg_path]
    return written
