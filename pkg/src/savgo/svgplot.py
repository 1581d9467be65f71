"""Tiny SVG line-chart writer.

Emits standalone SVG with explicit polyline coordinates so charts diff
cleanly in review and tests can parse the numbers back out. Handles
exactly what the harness needs: several labeled lines, optional shaded
bands, axes with ticks, a legend. Output depends only on the inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


@dataclass
class Series:
    """One labeled line, optionally with a shaded (lo, hi) band."""

    label: str
    x: np.ndarray
    y: np.ndarray
    band_low: np.ndarray | None = None
    band_high: np.ndarray | None = None


def _limits(series: list[Series]) -> tuple[float, float, float, float]:
    xs = np.concatenate([np.asarray(s.x, dtype=np.float64) for s in series])
    ys = [np.asarray(s.y, dtype=np.float64) for s in series]
    for s in series:
        if s.band_low is not None:
            ys.append(np.asarray(s.band_low, dtype=np.float64))
        if s.band_high is not None:
            ys.append(np.asarray(s.band_high, dtype=np.float64))
    ys = np.concatenate(ys)
    x_lo, x_hi = float(xs.min()), float(xs.max())
    y_lo, y_hi = float(ys.min()), float(ys.max())
    if x_hi - x_lo < 1e-12:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    pad = max(0.05 * (y_hi - y_lo), 1e-9)
    return x_lo, x_hi, y_lo - pad, y_hi + pad


def _fmt(v: float) -> str:
    return f"{v:.2f}".rstrip("0").rstrip(".") or "0"


def _tick_label(v: float) -> str:
    return f"{v:.6g}"


def render_chart(series: list[Series], title: str, x_label: str,
                 y_label: str, path, width: int = 720,
                 height: int = 440) -> None:
    """Write one chart; raises on empty input."""
    if not series:
        raise ValueError("no series to plot")
    left, right, top, bottom = 64, 16, 30, 46
    plot_w = width - left - right
    plot_h = height - top - bottom
    x_lo, x_hi, y_lo, y_hi = _limits(series)

    def sx(x):
        return left + (x - x_lo) / (x_hi - x_lo) * plot_w

    def sy(y):
        return top + (y_hi - y) / (y_hi - y_lo) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2}" y="18" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{title}</text>',
    ]
    # axes, grid, ticks
    for tick in np.linspace(x_lo, x_hi, 5):
        px = _fmt(sx(tick))
        parts.append(f'<line x1="{px}" y1="{top}" x2="{px}" '
                     f'y2="{top + plot_h}" stroke="#dddddd"/>')
        parts.append(f'<text x="{px}" y="{top + plot_h + 18}" '
                     f'text-anchor="middle" font-family="sans-serif" '
                     f'font-size="11">{_tick_label(tick)}</text>')
    for tick in np.linspace(y_lo, y_hi, 5):
        py = _fmt(sy(tick))
        parts.append(f'<line x1="{left}" y1="{py}" x2="{left + plot_w}" '
                     f'y2="{py}" stroke="#dddddd"/>')
        parts.append(f'<text x="{left - 6}" y="{py}" text-anchor="end" '
                     f'dominant-baseline="middle" font-family="sans-serif" '
                     f'font-size="11">{_tick_label(tick)}</text>')
    parts.append(f'<rect x="{left}" y="{top}" width="{plot_w}" '
                 f'height="{plot_h}" fill="none" stroke="#444444"/>')
    parts.append(f'<text x="{left + plot_w / 2}" y="{height - 8}" '
                 f'text-anchor="middle" font-family="sans-serif" '
                 f'font-size="12">{x_label}</text>')
    parts.append(f'<text x="16" y="{top + plot_h / 2}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="12" '
                 f'transform="rotate(-90 16 {top + plot_h / 2})">'
                 f'{y_label}</text>')

    for i, s in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        x = np.asarray(s.x, dtype=np.float64)
        y = np.asarray(s.y, dtype=np.float64)
        if s.band_low is not None and s.band_high is not None:
            lo = np.asarray(s.band_low, dtype=np.float64)
            hi = np.asarray(s.band_high, dtype=np.float64)
            ring = [f"{_fmt(sx(xv))},{_fmt(sy(yv))}"
                    for xv, yv in zip(x, hi)]
            ring += [f"{_fmt(sx(xv))},{_fmt(sy(yv))}"
                     for xv, yv in zip(x[::-1], lo[::-1])]
            parts.append(f'<polygon points="{" ".join(ring)}" '
                         f'fill="{color}" fill-opacity="0.15" '
                         f'stroke="none"/>')
        points = " ".join(f"{_fmt(sx(xv))},{_fmt(sy(yv))}"
                          for xv, yv in zip(x, y))
        parts.append(f'<polyline points="{points}" fill="none" '
                     f'stroke="{color}" stroke-width="1.8"/>')
        ly = top + 16 + 16 * i
        lx = left + plot_w - 150
        parts.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 22}" '
                     f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{lx + 28}" y="{ly}" '
                     f'font-family="sans-serif" font-size="11">'
                     f'{s.label}</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
