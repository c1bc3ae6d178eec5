"""Deterministic SVG emitters for run artifacts.

Line charts and colored-rect heatmaps with a fixed viewport, fixed float
formatting and no timestamps, so identical inputs produce identical bytes
(golden-file friendly).  Heatmaps embed their color-scale range as metadata
so companion panels can share one scale.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")

# Five-stop sequential colormap (dark blue -> teal -> yellow), interpolated
# linearly in RGB.
_STOPS = (
    (0.00, (13, 8, 135)),
    (0.25, (84, 39, 143)),
    (0.50, (33, 113, 181)),
    (0.75, (65, 174, 118)),
    (1.00, (254, 232, 37)),
)


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _label(v: float) -> str:
    return f"{v:.4g}"


def colormap(u: float) -> str:
    """Hex color for u in [0, 1]."""
    u = min(max(float(u), 0.0), 1.0)
    for (p0, c0), (p1, c1) in zip(_STOPS[:-1], _STOPS[1:]):
        if u <= p1:
            f = 0.0 if p1 == p0 else (u - p0) / (p1 - p0)
            rgb = tuple(int(round(a + f * (b - a))) for a, b in zip(c0, c1))
            return "#{:02x}{:02x}{:02x}".format(*rgb)
    return "#{:02x}{:02x}{:02x}".format(*_STOPS[-1][1])


def _ticks(lo: float, hi: float, count: int = 5):
    if hi == lo:
        return [lo]
    return [lo + (hi - lo) * i / (count - 1) for i in range(count)]


class _Canvas:
    def __init__(self, width, height, title):
        self.width = width
        self.height = height
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="monospace" font-size="11">',
            f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
        ]
        if title:
            self.parts.append(
                f'<text x="{width / 2:.1f}" y="16" text-anchor="middle" font-size="13">{title}</text>'
            )

    def add(self, fragment):
        self.parts.append(fragment)

    def render(self):
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def line_chart(series, *, title="", x_label="", y_label="", log_y=False, width=640, height=420) -> str:
    """Polyline chart; ``series`` is a list of (label, xs, ys) triples."""
    series = [(label, np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)) for label, xs, ys in series]
    series = [(label, xs, ys) for label, xs, ys in series if xs.size and ys.size]
    if not series:
        raise ValueError("line_chart needs at least one non-empty series")

    def transform(y):
        return np.log10(np.maximum(y, 1e-300)) if log_y else y

    all_x = np.concatenate([xs for _, xs, _ in series])
    all_y = np.concatenate([transform(ys) for _, _, ys in series])
    x_lo, x_hi = float(all_x.min()), float(all_x.max())
    y_lo, y_hi = float(all_y.min()), float(all_y.max())
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    margin_l, margin_r, margin_t, margin_b = 64, 16, 28, 44
    plot_w = width - margin_l - margin_r
    plot_h = height - margin_t - margin_b

    def px(x):
        return margin_l + (x - x_lo) / (x_hi - x_lo) * plot_w

    def py(y):
        return margin_t + (1.0 - (y - y_lo) / (y_hi - y_lo)) * plot_h

    svg = _Canvas(width, height, title)
    svg.add(
        f'<rect x="{margin_l}" y="{margin_t}" width="{plot_w}" height="{plot_h}" '
        f'fill="none" stroke="#888888"/>'
    )
    for tx in _ticks(x_lo, x_hi):
        svg.add(
            f'<line x1="{_fmt(px(tx))}" y1="{margin_t + plot_h}" x2="{_fmt(px(tx))}" '
            f'y2="{margin_t + plot_h + 4}" stroke="#888888"/>'
            f'<text x="{_fmt(px(tx))}" y="{margin_t + plot_h + 16}" text-anchor="middle">{_label(tx)}</text>'
        )
    for ty in _ticks(y_lo, y_hi):
        label = _label(10.0**ty) if log_y else _label(ty)
        svg.add(
            f'<line x1="{margin_l - 4}" y1="{_fmt(py(ty))}" x2="{margin_l}" y2="{_fmt(py(ty))}" stroke="#888888"/>'
            f'<text x="{margin_l - 6}" y="{_fmt(py(ty) + 3)}" text-anchor="end">{label}</text>'
        )
    if x_label:
        svg.add(
            f'<text x="{margin_l + plot_w / 2:.1f}" y="{height - 8}" text-anchor="middle">{x_label}</text>'
        )
    if y_label:
        svg.add(
            f'<text x="14" y="{margin_t + plot_h / 2:.1f}" text-anchor="middle" '
            f'transform="rotate(-90 14 {margin_t + plot_h / 2:.1f})">{y_label}</text>'
        )
    for k, (label, xs, ys) in enumerate(series):
        color = PALETTE[k % len(PALETTE)]
        ty = transform(ys)
        points = " ".join(f"{_fmt(px(x))},{_fmt(py(y))}" for x, y in zip(xs, ty))
        svg.add(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{points}"/>')
        svg.add(
            f'<rect x="{margin_l + 8 + 120 * (k % 4)}" y="{margin_t + 6 + 14 * (k // 4)}" width="10" '
            f'height="3" fill="{color}"/>'
            f'<text x="{margin_l + 22 + 120 * (k % 4)}" y="{margin_t + 11 + 14 * (k // 4)}">{label}</text>'
        )
    return svg.render()


def heatmap(values, *, x_range, y_range, title="", x_label="", y_label="", v_min=None, v_max=None,
            width=560, height=480) -> str:
    """Colored-rect heatmap of a 2-D array (rows along y, columns along x).

    ``v_min``/``v_max`` pin the color scale; passing the same values to
    several heatmaps gives them a shared scale, which is recorded in the
    embedded ``<metadata>`` element.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 2 or values.size == 0:
        raise ValueError("heatmap needs a non-empty 2-D array")
    lo = float(values.min()) if v_min is None else float(v_min)
    hi = float(values.max()) if v_max is None else float(v_max)
    if hi == lo:
        hi = lo + 1.0
    ny, nx = values.shape
    margin_l, margin_r, margin_t, margin_b = 56, 86, 28, 44
    plot_w = width - margin_l - margin_r
    plot_h = height - margin_t - margin_b
    cell_w = plot_w / nx
    cell_h = plot_h / ny

    svg = _Canvas(width, height, title)
    svg.add(f"<metadata>color-scale v_min={lo!r} v_max={hi!r}</metadata>")
    norm = (values - lo) / (hi - lo)
    for j in range(ny):
        y_px = margin_t + plot_h - (j + 1) * cell_h
        row = []
        for i in range(nx):
            color = colormap(norm[j, i])
            row.append(
                f'<rect x="{_fmt(margin_l + i * cell_w)}" y="{_fmt(y_px)}" '
                f'width="{_fmt(cell_w + 0.5)}" height="{_fmt(cell_h + 0.5)}" fill="{color}"/>'
            )
        svg.add("".join(row))
    svg.add(
        f'<rect x="{margin_l}" y="{margin_t}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#888888"/>'
    )
    x0, x1 = x_range
    y0, y1 = y_range
    for f in (0.0, 0.5, 1.0):
        tx = x0 + f * (x1 - x0)
        svg.add(
            f'<text x="{_fmt(margin_l + f * plot_w)}" y="{margin_t + plot_h + 16}" '
            f'text-anchor="middle">{_label(tx)}</text>'
        )
        ty = y0 + f * (y1 - y0)
        svg.add(
            f'<text x="{margin_l - 6}" y="{_fmt(margin_t + plot_h - f * plot_h + 3)}" '
            f'text-anchor="end">{_label(ty)}</text>'
        )
    if x_label:
        svg.add(f'<text x="{margin_l + plot_w / 2:.1f}" y="{height - 8}" text-anchor="middle">{x_label}</text>')
    if y_label:
        svg.add(
            f'<text x="14" y="{margin_t + plot_h / 2:.1f}" text-anchor="middle" '
            f'transform="rotate(-90 14 {margin_t + plot_h / 2:.1f})">{y_label}</text>'
        )
    # color bar
    bar_x = width - margin_r + 18
    steps = 32
    for s in range(steps):
        f = (s + 0.5) / steps
        y_px = margin_t + plot_h - (s + 1) / steps * plot_h
        svg.add(
            f'<rect x="{bar_x}" y="{_fmt(y_px)}" width="12" height="{_fmt(plot_h / steps + 0.5)}" '
            f'fill="{colormap(f)}"/>'
        )
    svg.add(f'<text x="{bar_x + 16}" y="{margin_t + plot_h}" font-size="10">{_label(lo)}</text>')
    svg.add(f'<text x="{bar_x + 16}" y="{margin_t + 8}" font-size="10">{_label(hi)}</text>')
    return svg.render()


def write(path, svg_text: str):
    Path(path).write_text(svg_text)
