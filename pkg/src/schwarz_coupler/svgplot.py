"""Minimal deterministic SVG 1.1 line plots.

Output depends only on the data: fixed 800x600 viewport, fixed tick rule
(1-2-5 steps on linear axes, decades on log axes), coordinates printed
with a fixed number of decimals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 800, 600
PALETTE = ("#1f4e9c", "#c0392b", "#2e8b57", "#8e44ad", "#d4800f", "#555555")
DASHES = ("", "6,4", "2,3", "10,3,2,3")


@dataclass
class Series:
    x: Sequence[float]
    y: Sequence[float]
    label: str = ""
    color: str | None = None
    dash: str | None = None
    markers: bool = False


@dataclass
class Panel:
    series: list[Series] = field(default_factory=list)
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    logy: bool = False
    vlines: list[float] = field(default_factory=list)


def nice_ticks(lo: float, hi: float, target: int = 6) -> list[float]:
    """Ticks at multiples of 1, 2 or 5 times a power of ten covering ``[lo, hi]``."""
    if not (math.isfinite(lo) and math.isfinite(hi)):
        return [0.0]
    if hi <= lo:
        pad = abs(lo) * 0.5 or 1.0
        lo, hi = lo - pad, hi + pad
    raw = (hi - lo) / max(target - 1, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 5, 10) if m * mag >= raw * (1 - 1e-12))
    first = math.floor(lo / step + 1e-9)
    last = math.ceil(hi / step - 1e-9)
    return [round(k * step, 12) + 0.0 for k in range(first, last + 1)]


def log_ticks(lo: float, hi: float) -> list[float]:
    a = math.floor(math.log10(lo))
    b = math.ceil(math.log10(hi))
    if b == a:
        b = a + 1
    stride = max(1, math.ceil((b - a) / 8))
    top = a + stride * math.ceil((b - a) / stride)
    return [10.0 ** k for k in range(a, top + 1, stride)]


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _label(v: float, log: bool) -> str:
    if log:
        return f"1e{int(round(math.log10(v)))}"
    return f"{v:g}"


def _finite(panel: Panel):
    xs, ys = [], []
    for s in panel.series:
        x = np.asarray(s.x, dtype=float)
        y = np.asarray(s.y, dtype=float)
        ok = np.isfinite(x) & np.isfinite(y)
        if panel.logy:
            ok &= y > 0
        xs.append(x[ok])
        ys.append(y[ok])
    return xs, ys


def _panel_svg(panel: Panel, left: float, top: float, width: float, height: float) -> list[str]:
    out = []
    m_l, m_r, m_t, m_b = 70.0, 20.0, 36.0, 52.0
    x0, x1 = left + m_l, left + width - m_r
    y0, y1 = top + m_t, top + height - m_b
    xs, ys = _finite(panel)
    allx = np.concatenate(xs + [np.asarray(panel.vlines, dtype=float)]) if xs else np.zeros(0)
    ally = np.concatenate(ys) if ys else np.zeros(0)
    if allx.size == 0:
        allx = np.array([0.0, 1.0])
    if ally.size == 0:
        ally = np.array([1.0]) if panel.logy else np.array([0.0])
    xt = nice_ticks(float(allx.min()), float(allx.max()))
    if panel.logy:
        yt = log_ticks(float(ally.min()), float(ally.max()))
        ty = [math.log10(t) for t in yt]
    else:
        yt = nice_ticks(float(ally.min()), float(ally.max()))
        ty = yt
    xlo, xhi = xt[0], xt[-1]
    ylo, yhi = ty[0], ty[-1]

    def px(v):
        return x0 + (v - xlo) / (xhi - xlo) * (x1 - x0)

    def py(v):
        if panel.logy:
            v = math.log10(v)
        return y1 - (v - ylo) / (yhi - ylo) * (y1 - y0)

    out.append(f'<rect x="{_fmt(x0)}" y="{_fmt(y0)}" width="{_fmt(x1 - x0)}" height="{_fmt(y1 - y0)}" '
               'fill="none" stroke="#000000" stroke-width="1"/>')
    for t in xt:
        X = px(t)
        out.append(f'<line x1="{_fmt(X)}" y1="{_fmt(y1)}" x2="{_fmt(X)}" y2="{_fmt(y0)}" stroke="#e3e3e3" stroke-width="1"/>')
        out.append(f'<text x="{_fmt(X)}" y="{_fmt(y1 + 18)}" text-anchor="middle">{escape(_label(t, False))}</text>')
    for t in yt:
        Y = py(t)
        out.append(f'<line x1="{_fmt(x0)}" y1="{_fmt(Y)}" x2="{_fmt(x1)}" y2="{_fmt(Y)}" stroke="#e3e3e3" stroke-width="1"/>')
        out.append(f'<text x="{_fmt(x0 - 6)}" y="{_fmt(Y + 4)}" text-anchor="end">{escape(_label(t, panel.logy))}</text>')
    for v in panel.vlines:
        X = px(v)
        out.append(f'<line class="interface" x1="{_fmt(X)}" y1="{_fmt(y1)}" x2="{_fmt(X)}" y2="{_fmt(y0)}" '
                   'stroke="#777777" stroke-width="1.5" stroke-dasharray="4,4"/>')
    for k, (s, x, y) in enumerate(zip(panel.series, xs, ys)):
        color = s.color or PALETTE[k % len(PALETTE)]
        dash = DASHES[k % len(DASHES)] if s.dash is None else s.dash
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        if x.size:
            pts = " ".join(f"{_fmt(px(a))},{_fmt(py(b))}" for a, b in zip(x, y))
            out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"{extra}/>')
            if s.markers:
                for a, b in zip(x, y):
                    out.append(f'<circle cx="{_fmt(px(a))}" cy="{_fmt(py(b))}" r="2.5" fill="{color}"/>')
        if s.label:
            ly = y0 + 16 + 18 * k
            out.append(f'<line x1="{_fmt(x1 - 150)}" y1="{_fmt(ly - 4)}" x2="{_fmt(x1 - 122)}" y2="{_fmt(ly - 4)}" '
                       f'stroke="{color}" stroke-width="2"{extra}/>')
            out.append(f'<text x="{_fmt(x1 - 116)}" y="{_fmt(ly)}">{escape(s.label)}</text>')
    if panel.title:
        out.append(f'<text x="{_fmt((x0 + x1) / 2)}" y="{_fmt(top + 22)}" text-anchor="middle" font-size="15">'
                   f"{escape(panel.title)}</text>")
    if panel.xlabel:
        out.append(f'<text x="{_fmt((x0 + x1) / 2)}" y="{_fmt(y1 + 40)}" text-anchor="middle">{escape(panel.xlabel)}</text>')
    if panel.ylabel:
        cx, cy = left + 16, (y0 + y1) / 2
        out.append(f'<text x="{_fmt(cx)}" y="{_fmt(cy)}" text-anchor="middle" '
                   f'transform="rotate(-90 {_fmt(cx)} {_fmt(cy)})">{escape(panel.ylabel)}</text>')
    return out


def render(panels: Sequence[Panel]) -> str:
    """SVG document with the panels laid out side by side."""
    panels = list(panels)
    w = WIDTH / max(len(panels), 1)
    body = []
    for k, p in enumerate(panels):
        body += _panel_svg(p, k * w, 0.0, w, HEIGHT)
    head = (
        '<?xml version="1.0" encoding="UTF-8" standalone="no"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">\n'
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>\n'
    )
    return head + "\n".join(body) + "\n</svg>\n"


def write(panels: Sequence[Panel], path: str | Path) -> Path:
    path = Path(path)
    path.write_text(render(panels), encoding="utf-8")
    return path
