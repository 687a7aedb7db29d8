"""Dependency-free static SVG plots of experiment records."""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

W, H = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 70, 70, 30, 50


def _scale(lo, hi, a, b):
    if hi <= lo:
        hi = lo + 1.0
    return lambda v: a + (np.asarray(v, dtype=float) - lo) * (b - a) / (hi - lo)


def _path(xs, ys, color, dashed=False, cls="series"):
    if len(xs) == 0:
        return ""
    pts = " L ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
    dash = ' stroke-dasharray="6,4"' if dashed else ""
    return f'<path class="{cls}" d="M {pts}" fill="none" stroke="{color}" stroke-width="1.8"{dash}/>'


def _axis_ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    return np.linspace(lo, hi, n)


def _frame(title, xlabel):
    x0, x1, y0, y1 = LEFT, W - RIGHT, TOP, H - BOTTOM
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{W / 2}" y="18" text-anchor="middle" font-size="14" font-family="sans-serif">{escape(title)}</text>',
        f'<line class="axis" x1="{x0}" y1="{y1}" x2="{x1}" y2="{y1}" stroke="black"/>',
        f'<line class="axis" x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
        f'<text x="{(x0 + x1) / 2}" y="{H - 12}" text-anchor="middle" font-size="12" font-family="sans-serif">{escape(xlabel)}</text>',
    ]


def _ticks(parts, sx, lo, hi, where, fmt="{:.2g}"):
    x0, x1, y0, y1 = LEFT, W - RIGHT, TOP, H - BOTTOM
    for v in _axis_ticks(lo, hi):
        if where == "bottom":
            p = float(sx(v))
            parts.append(f'<line x1="{p:.2f}" y1="{y1}" x2="{p:.2f}" y2="{y1 + 5}" stroke="black"/>')
            parts.append(f'<text x="{p:.2f}" y="{y1 + 18}" text-anchor="middle" font-size="10" font-family="sans-serif">{fmt.format(v)}</text>')
        elif where == "left":
            p = float(sx(v))
            parts.append(f'<line x1="{x0 - 5}" y1="{p:.2f}" x2="{x0}" y2="{p:.2f}" stroke="black"/>')
            parts.append(f'<text x="{x0 - 8}" y="{p + 3:.2f}" text-anchor="end" font-size="10" font-family="sans-serif">{fmt.format(v)}</text>')
        else:
            p = float(sx(v))
            parts.append(f'<line x1="{x1}" y1="{p:.2f}" x2="{x1 + 5}" y2="{p:.2f}" stroke="black"/>')
            parts.append(f'<text x="{x1 + 8}" y="{p + 3:.2f}" text-anchor="start" font-size="10" font-family="sans-serif">{fmt.format(v)}</text>')


def _legend(parts, entries):
    y = TOP + 12
    for label, color, dashed in entries:
        dash = ' stroke-dasharray="6,4"' if dashed else ""
        parts.append(f'<line x1="{LEFT + 10}" y1="{y}" x2="{LEFT + 34}" y2="{y}" stroke="{color}" stroke-width="2"{dash}/>')
        parts.append(f'<text x="{LEFT + 40}" y="{y + 4}" font-size="11" font-family="sans-serif">{escape(label)}</text>')
        y += 16


def timeseries_svg(times, qubit_purity, observer_purity, mean_x, title="") -> str:
    """Purities on a [0, 1] left axis, <x> on the right axis."""
    t = np.asarray(times, dtype=float)
    mx = np.asarray(mean_x, dtype=float)
    x0, x1, y0, y1 = LEFT, W - RIGHT, TOP, H - BOTTOM
    t_lo, t_hi = (float(t.min()), float(t.max())) if t.size else (0.0, 1.0)
    sx = _scale(t_lo, t_hi, x0, x1)
    sp = _scale(0.0, 1.0, y1, y0)
    lim = max(1.5, float(np.max(np.abs(mx)))) if mx.size else 1.5
    sr = _scale(-lim, lim, y1, y0)
    parts = _frame(title or "purity and mean position", "t")
    parts.append(f'<line class="axis" x1="{x1}" y1="{y0}" x2="{x1}" y2="{y1}" stroke="black"/>')
    _ticks(parts, sx, t_lo, t_hi, "bottom")
    _ticks(parts, sp, 0.0, 1.0, "left")
    _ticks(parts, sr, -lim, lim, "right")
    parts.append(f'<text x="18" y="{(y0 + y1) / 2}" font-size="12" font-family="sans-serif" transform="rotate(-90 18 {(y0 + y1) / 2})" text-anchor="middle">purity</text>')
    parts.append(f'<text x="{W - 14}" y="{(y0 + y1) / 2}" font-size="12" font-family="sans-serif" transform="rotate(90 {W - 14} {(y0 + y1) / 2})" text-anchor="middle">&lt;x&gt;</text>')
    if t.size:
        parts.append(_path(sx(t), sp(qubit_purity), "#1f77b4"))
        parts.append(_path(sx(t), sp(observer_purity), "#ff7f0e"))
        parts.append(_path(sx(t), sr(mx), "#d62728", dashed=True))
    _legend(parts, [("Tr(rho_Q^2)", "#1f77b4", False), ("Tr(rho_O^2)", "#ff7f0e", False),
                    ("<x>", "#d62728", True)])
    parts.append("</svg>")
    return "\n".join(p for p in parts if p) + "\n"


def distribution_svg(x, probability, left_state=None, right_state=None, title="") -> str:
    """Final position distribution with the left/right well states (dashed) overlaid."""
    x = np.asarray(x, dtype=float)
    p = np.asarray(probability, dtype=float)
    refs = []
    if left_state is not None:
        refs.append(("|O_L(x)|^2", np.abs(left_state) ** 2, "#2ca02c"))
    if right_state is not None:
        refs.append(("|O_R(x)|^2", np.abs(right_state) ** 2, "#9467bd"))
    top = max([float(p.max()) if p.size else 1.0] + [float(r.max()) for _, r, _ in refs]) or 1.0
    x0, x1, y0, y1 = LEFT, W - RIGHT, TOP, H - BOTTOM
    x_lo, x_hi = (float(x.min()), float(x.max())) if x.size else (-1.0, 1.0)
    sx = _scale(x_lo, x_hi, x0, x1)
    sy = _scale(0.0, 1.05 * top, y1, y0)
    parts = _frame(title or "final observer position distribution", "x")
    _ticks(parts, sx, x_lo, x_hi, "bottom")
    _ticks(parts, sy, 0.0, 1.05 * top, "left")
    if x.size:
        parts.append(_path(sx(x), sy(p), "black"))
        for _, r, color in refs:
            parts.append(_path(sx(x), sy(r), color, dashed=True, cls="reference"))
    _legend(parts, [("<x|rho_O|x>", "black", False)] + [(lbl, c, True) for lbl, _, c in refs])
    parts.append("</svg>")
    return "\n".join(q for q in parts if q) + "\n"


def emit_svg_plot(record, path_timeseries, path_distribution=None) -> list[Path]:
    name = record.protocol.name
    out = [Path(path_timeseries)]
    out[0].write_text(timeseries_svg(record.times, record.qubit_purity_series,
                                     record.observer_purity_series, record.mean_x_series,
                                     title=f"{name}: purities and <x>"), encoding="utf-8")
    if path_distribution is not None:
        wells = record.wells
        out.append(Path(path_distribution))
        out[1].write_text(distribution_svg(record.x_nodes, record.final_distribution,
                                           wells.left_state if wells else None,
                                           wells.right_state if wells else None,
                                           title=f"{name}: final position distribution"), encoding="utf-8")
    return out
