"""Minimal self-contained SVG 1.1 line figures (no external renderer)."""

from __future__ import annotations

import math

MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 56, 14, 28, 42


def _ticks(lo: float, hi: float, target: int = 5) -> list[float]:
    span = hi - lo
    if span <= 0:
        return [lo]
    raw = span / target
    mag = 10.0 ** math.floor(math.log10(raw))
    step = min((m for m in (1.0, 2.0, 5.0, 10.0) if m * mag >= raw), default=10.0) * mag
    first = math.ceil(lo / step) * step
    out = []
    v = first
    while v <= hi + 1e-12 * max(1.0, abs(hi)):
        out.append(0.0 if abs(v) < 1e-15 * step else v)
        v += step
    return out


def _fmt(v: float) -> str:
    return f"{v:.4g}"


class Panel:
    """One set of axes with polyline curves."""

    def __init__(self, title: str = "", xlabel: str = "", ylabel: str = ""):
        self.title = title
        self.xlabel = xlabel
        self.ylabel = ylabel
        self.curves: list[tuple] = []

    def add(self, x, y, *, stroke: str = "#1f4e8c", width: float = 1.2, dash: str | None = None):
        xs = [float(v) for v in x]
        ys = [float(v) for v in y]
        if len(xs) != len(ys):
            raise ValueError("x and y lengths differ")
        self.curves.append((xs, ys, stroke, width, dash))
        return self

    def _bounds(self):
        xs = [v for c in self.curves for v in c[0]]
        ys = [v for c in self.curves for v in c[1]]
        x0, x1 = min(xs), max(xs)
        y0, y1 = min(ys), max(ys)
        if x1 == x0:
            x1 = x0 + 1.0
        if y1 == y0:
            y0, y1 = y0 - 0.5, y1 + 0.5
        pad = 0.04 * (y1 - y0)
        return x0, x1, y0 - pad, y1 + pad

    def render(self, ox: float, oy: float, width: float, height: float) -> str:
        if not self.curves:
            raise ValueError("panel has no curves")
        x0, x1, y0, y1 = self._bounds()
        pw = width - MARGIN_L - MARGIN_R
        ph = height - MARGIN_T - MARGIN_B

        def px(v):
            return ox + MARGIN_L + (v - x0) / (x1 - x0) * pw

        def py(v):
            return oy + MARGIN_T + (y1 - v) / (y1 - y0) * ph

        parts = [
            f'<rect x="{ox + MARGIN_L}" y="{oy + MARGIN_T}" width="{pw}" height="{ph}" '
            'fill="none" stroke="#333" stroke-width="0.8"/>'
        ]
        for v in _ticks(x0, x1):
            x = px(v)
            parts.append(f'<line x1="{x:.2f}" y1="{py(y0):.2f}" x2="{x:.2f}" y2="{py(y0) + 4:.2f}" stroke="#333" stroke-width="0.8"/>')
            parts.append(f'<text x="{x:.2f}" y="{py(y0) + 16:.2f}" font-size="10" text-anchor="middle">{_fmt(v)}</text>')
        for v in _ticks(y0, y1):
            y = py(v)
            parts.append(f'<line x1="{px(x0) - 4:.2f}" y1="{y:.2f}" x2="{px(x0):.2f}" y2="{y:.2f}" stroke="#333" stroke-width="0.8"/>')
            parts.append(f'<text x="{px(x0) - 7:.2f}" y="{y + 3:.2f}" font-size="10" text-anchor="end">{_fmt(v)}</text>')
        for xs, ys, stroke, w, dash in self.curves:
            pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(xs, ys))
            dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
            parts.append(f'<polyline points="{pts}" fill="none" stroke="{stroke}" stroke-width="{w}"{dash_attr}/>')
        cx = ox + MARGIN_L + pw / 2
        if self.title:
            parts.append(f'<text x="{cx:.2f}" y="{oy + 16:.2f}" font-size="12" text-anchor="middle">{self.title}</text>')
        if self.xlabel:
            parts.append(f'<text x="{cx:.2f}" y="{oy + height - 10:.2f}" font-size="11" text-anchor="middle">{self.xlabel}</text>')
        if self.ylabel:
            ly = oy + MARGIN_T + ph / 2
            parts.append(
                f'<text x="{ox + 14:.2f}" y="{ly:.2f}" font-size="11" text-anchor="middle" '
                f'transform="rotate(-90 {ox + 14:.2f} {ly:.2f})">{self.ylabel}</text>'
            )
        return "\n".join(parts)


def write_figure(path, panels: list[Panel], *, ncols: int = 1, panel_width: int = 460, panel_height: int = 340) -> None:
    """Lay panels out on a grid and write one static SVG file."""
    n = len(panels)
    ncols = max(1, min(ncols, n))
    nrows = (n + ncols - 1) // ncols
    width = ncols * panel_width
    height = nrows * panel_height
    body = []
    for i, panel in enumerate(panels):
        ox = (i % ncols) * panel_width
        oy = (i // ncols) * panel_height
        body.append(panel.render(ox, oy, panel_width, panel_height))
    svg = (
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">\n<rect width="100%" height="100%" fill="white"/>\n'
        + "\n".join(body)
        + "\n</svg>\n"
    )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(svg)
