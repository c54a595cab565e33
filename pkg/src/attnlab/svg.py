"""Standalone SVG figures: attention heatmaps, PCA arrow plots and metric curves.

No plotting library is involved; every figure is a handful of primitive SVG
elements so tests can inspect them with an XML parser.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

MODE_COLORS = {"em": "#1f4fd6", "sgd": "#d62728"}
FALLBACK_COLORS = ["#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"]

# Monotone ramp from white through yellow/orange to dark red; luminance
# decreases strictly along it.
RAMP = [(255, 255, 255), (255, 237, 160), (254, 178, 76), (240, 59, 32), (128, 0, 38)]


def _header(width: float, height: float) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{height:.0f}" '
        f'viewBox="0 0 {width:.0f} {height:.0f}">',
        f'<rect class="background" x="0" y="0" width="{width:.0f}" height="{height:.0f}" fill="#ffffff"/>',
    ]


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


def ramp_color(t: float) -> str:
    """Color for ``t`` in [0, 1] along ``RAMP``."""
    t = min(max(float(t), 0.0), 1.0) * (len(RAMP) - 1)
    i = min(int(t), len(RAMP) - 2)
    f = t - i
    rgb = [round(a + (b - a) * f) for a, b in zip(RAMP[i], RAMP[i + 1])]
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def _write(path, lines: list[str]) -> Path:
    path = Path(path)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def emit_svg_heatmap(matrix, path, title: str = "", cell: float | None = None, vmin=None, vmax=None) -> Path:
    """Heatmap with one ``<rect class="cell">`` per matrix entry."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("heatmap entries must be finite")
    rows, cols = m.shape
    if cell is None:
        cell = max(2.0, min(40.0, 400.0 / max(rows, cols)))
    lo = float(m.min()) if vmin is None else vmin
    hi = float(m.max()) if vmax is None else vmax
    span = hi - lo if hi > lo else 1.0
    margin, top = 20.0, 40.0 if title else 20.0
    width = 2 * margin + cols * cell + 60
    height = top + margin + rows * cell
    lines = _header(width, height)
    if title:
        lines.append(f'<text x="{margin}" y="24" font-size="14" font-family="sans-serif">{_escape(title)}</text>')
    for i in range(rows):
        for j in range(cols):
            c = ramp_color((m[i, j] - lo) / span)
            lines.append(
                f'<rect class="cell" x="{margin + j * cell:.2f}" y="{top + i * cell:.2f}" '
                f'width="{cell:.2f}" height="{cell:.2f}" fill="{c}"><title>{i},{j}: {m[i, j]:.4g}</title></rect>'
            )
    # colour bar
    bx = margin + cols * cell + 20
    steps = 20
    bh = rows * cell / steps
    for s in range(steps):
        c = ramp_color(1.0 - s / (steps - 1))
        lines.append(f'<rect class="colorbar" x="{bx:.2f}" y="{top + s * bh:.2f}" width="12" height="{bh:.2f}" fill="{c}"/>')
    lines.append(f'<text x="{bx + 16:.2f}" y="{top + 8:.2f}" font-size="9" font-family="sans-serif">{hi:.3g}</text>')
    lines.append(f'<text x="{bx + 16:.2f}" y="{top + rows * cell:.2f}" font-size="9" font-family="sans-serif">{lo:.3g}</text>')
    lines.append("</svg>")
    return _write(path, lines)


def _color(mode: str, k: int) -> str:
    return MODE_COLORS.get(mode, FALLBACK_COLORS[k % len(FALLBACK_COLORS)])


def emit_svg_arrows(projections: Mapping[str, object], path, title: str = "", size: float = 480.0) -> Path:
    """Arrow plot of PCA trajectories, one colour per run label.

    ``projections`` maps a label (``"em"``, ``"sgd"``...) to a
    :class:`~attnlab.diagnostics.PcaProjection`. Zero-length arrows are drawn
    as dots.
    """
    pts = [np.vstack([p.start, p.end]) for p in projections.values()]
    allp = np.vstack(pts) if pts else np.zeros((1, 2))
    lo = allp.min(axis=0)
    hi = allp.max(axis=0)
    span = np.where(hi - lo > 0, hi - lo, 1.0)
    margin = 30.0
    inner = size - 2 * margin

    def px(p):
        x = margin + (p[0] - lo[0]) / span[0] * inner
        y = size - margin - (p[1] - lo[1]) / span[1] * inner
        return x, y

    lines = _header(size, size + 20)
    lines.append("<defs>")
    for k, label in enumerate(projections):
        c = _color(label, k)
        lines.append(
            f'<marker id="head-{_escape(label)}" viewBox="0 0 10 10" refX="9" refY="5" markerWidth="5" '
            f'markerHeight="5" orient="auto"><path d="M0,0 L10,5 L0,10 z" fill="{c}"/></marker>'
        )
    lines.append("</defs>")
    if title:
        lines.append(f'<text x="{margin}" y="20" font-size="14" font-family="sans-serif">{_escape(title)}</text>')
    for k, (label, proj) in enumerate(projections.items()):
        c = _color(label, k)
        for a, b in zip(proj.start, proj.end):
            x0, y0 = px(a)
            x1, y1 = px(b)
            lines.append(f'<circle class="start" cx="{x0:.2f}" cy="{y0:.2f}" r="1.5" fill="#999999"/>')
            if np.allclose(a, b):
                lines.append(f'<circle class="dot {_escape(label)}" cx="{x1:.2f}" cy="{y1:.2f}" r="2" fill="{c}"/>')
            else:
                lines.append(
                    f'<line class="arrow {_escape(label)}" x1="{x0:.2f}" y1="{y0:.2f}" x2="{x1:.2f}" y2="{y1:.2f}" '
                    f'stroke="{c}" stroke-width="1" marker-end="url(#head-{_escape(label)})"/>'
                )
        lines.append(
            f'<text x="{margin + 80 * k}" y="{size + 12}" font-size="11" fill="{c}" font-family="sans-serif">'
            f"{_escape(label)}</text>"
        )
    lines.append("</svg>")
    return _write(path, lines)


def emit_svg_curves(series: Mapping[str, Sequence[float]], path, title: str = "", ylabel: str = "",
                    hline: float | None = None, width: float = 560.0, height: float = 320.0) -> Path:
    """Line plot of one or more metric curves against step."""
    margin_l, margin_r, margin_t, margin_b = 56.0, 16.0, 32.0, 36.0
    ys = [np.asarray(v, dtype=np.float64) for v in series.values()]
    vals = np.concatenate(ys + ([np.array([hline])] if hline is not None else []))
    lo, hi = float(vals.min()), float(vals.max())
    if hi <= lo:
        hi = lo + 1.0
    n = max(len(v) for v in ys)
    pw, ph = width - margin_l - margin_r, height - margin_t - margin_b

    def px(i, v):
        return margin_l + (i / max(n - 1, 1)) * pw, margin_t + (hi - v) / (hi - lo) * ph

    lines = _header(width, height)
    if title:
        lines.append(f'<text x="{margin_l}" y="20" font-size="14" font-family="sans-serif">{_escape(title)}</text>')
    lines.append(
        f'<rect x="{margin_l}" y="{margin_t}" width="{pw}" height="{ph}" fill="none" stroke="#444444" stroke-width="0.5"/>'
    )
    lines.append(f'<text x="6" y="{margin_t + 8}" font-size="9" font-family="sans-serif">{hi:.4g}</text>')
    lines.append(f'<text x="6" y="{margin_t + ph}" font-size="9" font-family="sans-serif">{lo:.4g}</text>')
    lines.append(f'<text x="{margin_l}" y="{height - 8}" font-size="10" font-family="sans-serif">step (0..{n - 1})</text>')
    if ylabel:
        lines.append(f'<text x="6" y="{margin_t - 10}" font-size="10" font-family="sans-serif">{_escape(ylabel)}</text>')
    if hline is not None:
        y = px(0, hline)[1]
        lines.append(
            f'<line class="reference" x1="{margin_l}" y1="{y:.2f}" x2="{margin_l + pw}" y2="{y:.2f}" '
            f'stroke="#777777" stroke-dasharray="4,3"/>'
        )
    for k, (label, v) in enumerate(series.items()):
        c = _color(label, k)
        pts = " ".join("{:.2f},{:.2f}".format(*px(i, float(y))) for i, y in enumerate(v))
        lines.append(f'<polyline class="curve {_escape(label)}" points="{pts}" fill="none" stroke="{c}" stroke-width="1.5"/>')
        lines.append(
            f'<text x="{width - margin_r - 60}" y="{margin_t + 14 + 12 * k}" font-size="10" fill="{c}" '
            f'font-family="sans-serif">{_escape(label)}</text>'
        )
    lines.append("</svg>")
    return _write(path, lines)
