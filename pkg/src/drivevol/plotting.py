"""Report figures.

``*_svg`` functions build standalone SVG documents as plain strings and
need nothing beyond the standard library. ``render_*`` functions draw the
same figures with matplotlib (Agg backend) into raster files.
"""

from __future__ import annotations

import math
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

POSITIVE = "#1f5fbf"
NEGATIVE = "#c0392b"


def _fmt(v: float) -> str:
    return f"{v:.2f}".rstrip("0").rstrip(".")


def correlation_bars_svg(entries: Sequence, title: str = "Correlation with crash frequency") -> str:
    """Horizontal bars of r per measure; positive bars blue, negative red."""
    rows = [e for e in entries if e.defined]
    label_w, bar_w, row_h, top = 190, 320, 16, 40
    height = top + row_h * len(rows) + 40
    width = label_w + bar_w + 40
    mid = label_w + bar_w / 2
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="10">',
           f'<text x="{width / 2}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>']
    for i, e in enumerate(rows):
        y = top + i * row_h
        length = abs(e.r) * bar_w / 2
        x = mid if e.r >= 0 else mid - length
        cls = "pos" if e.r >= 0 else "neg"
        color = POSITIVE if e.r >= 0 else NEGATIVE
        out.append(f'<text x="{label_w - 6}" y="{y + 11}" text-anchor="end">{escape(e.name)}</text>')
        out.append(f'<rect class="{cls}" x="{_fmt(x)}" y="{y + 2}" width="{_fmt(length)}" '
                   f'height="{row_h - 4}" fill="{color}"><title>r = {e.r:.3f} (n = {e.n})</title></rect>')
    axis_y = top + row_h * len(rows)
    out.append(f'<line x1="{mid}" y1="{top}" x2="{mid}" y2="{axis_y}" stroke="black"/>')
    for tick in (-1.0, -0.5, 0.0, 0.5, 1.0):
        x = mid + tick * bar_w / 2
        out.append(f'<line x1="{_fmt(x)}" y1="{axis_y}" x2="{_fmt(x)}" y2="{axis_y + 4}" stroke="black"/>')
        out.append(f'<text x="{_fmt(x)}" y="{axis_y + 16}" text-anchor="middle">{tick:g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def expected_actual_svg(actual: Sequence[float], expected: Mapping[str, Sequence[float]],
                        title: str = "Expected vs actual crashes") -> str:
    """Scatter of (actual, expected) per model with the 45-degree reference line."""
    size, pad = 420, 50
    series = list(expected.items())
    hi = max([max(actual, default=0.0)] + [max(v, default=0.0) for _, v in series] + [1.0])
    hi = math.ceil(hi * 1.05)
    scale = (size - 2 * pad) / hi
    colors = [POSITIVE, NEGATIVE, "#2e8b57", "#8e44ad"]

    def px(v):
        return pad + v * scale

    def py(v):
        return size - pad - v * scale

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}" font-family="sans-serif" font-size="10">',
           f'<text x="{size / 2}" y="20" text-anchor="middle" font-size="13">{escape(title)}</text>',
           f'<line x1="{px(0)}" y1="{py(0)}" x2="{px(hi)}" y2="{py(hi)}" stroke="#999" stroke-dasharray="4 3"/>',
           f'<line x1="{px(0)}" y1="{py(0)}" x2="{px(hi)}" y2="{py(0)}" stroke="black"/>',
           f'<line x1="{px(0)}" y1="{py(0)}" x2="{px(0)}" y2="{py(hi)}" stroke="black"/>',
           f'<text x="{size / 2}" y="{size - 12}" text-anchor="middle">actual crashes</text>',
           f'<text x="14" y="{size / 2}" text-anchor="middle" transform="rotate(-90 14 {size / 2})">expected crashes</text>']
    for k, (label, values) in enumerate(series):
        color = colors[k % len(colors)]
        for a, e in zip(actual, values):
            out.append(f'<circle cx="{_fmt(px(a))}" cy="{_fmt(py(e))}" r="3" fill="{color}" fill-opacity="0.7"/>')
        out.append(f'<text x="{pad + 8}" y="{pad + 14 * k}" fill="{color}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def render_correlation_bars(entries: Sequence, path: str) -> None:
    plt = _pyplot()
    rows = [e for e in entries if e.defined][::-1]
    fig, ax = plt.subplots(figsize=(6.5, max(3.0, 0.22 * len(rows) + 1)))
    ax.barh([e.name for e in rows], [e.r for e in rows],
            color=[POSITIVE if e.r >= 0 else NEGATIVE for e in rows])
    ax.axvline(0, color="black", lw=0.8)
    ax.set_xlim(-1, 1)
    ax.set_xlabel("correlation with crash frequency")
    ax.tick_params(axis="y", labelsize=7)
    fig.tight_layout()
    fig.savefig(path, format="png", dpi=120, metadata={"Software": None})
    plt.close(fig)


def render_expected_actual(actual, expected: Mapping[str, Sequence[float]], path: str) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    hi = max([max(actual, default=1.0)] + [max(v, default=1.0) for v in expected.values()]) * 1.05
    ax.plot([0, hi], [0, hi], ls="--", color="0.6", lw=0.8)
    for label, values in expected.items():
        ax.scatter(actual, values, s=12, alpha=0.7, label=label)
    ax.set_xlabel("actual crashes")
    ax.set_ylabel("expected crashes")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, format="png", dpi=120, metadata={"Software": None})
    plt.close(fig)
