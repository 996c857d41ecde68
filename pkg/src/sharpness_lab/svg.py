"""Self-contained SVG line charts (no plotting dependency).

Charts are deterministic text: fixed palette, fixed float formatting, one
<path> element per data series, optional shaded bands as <polygon> elements.
Log axes use decade ticks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

_PALETTE = ("#1f6fb2", "#d1495b", "#3e8e5a", "#8d6cab", "#c98a2b", "#4a4a4a")

_W, _H = 640, 420
_ML, _MR, _MT, _MB = 70, 20, 40, 55  # margins


@dataclass(frozen=True)
class Series:
    name: str
    xs: Sequence[float]
    ys: Sequence[float]


@dataclass(frozen=True)
class Band:
    """Shaded region between lower and upper, matched to a series color."""

    xs: Sequence[float]
    lower: Sequence[float]
    upper: Sequence[float]
    series_index: int = 0


def _log_floor(values: Sequence[float]) -> float:
    positive = [v for v in values if v > 0]
    return min(positive) / 10.0 if positive else 1e-300


def _axis_range(values, log: bool):
    lo, hi = min(values), max(values)
    if log:
        lo, hi = math.log10(lo), math.log10(hi)
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def _ticks(lo: float, hi: float, log: bool) -> list[float]:
    if log:
        return [t for t in range(math.ceil(lo), math.floor(hi) + 1)]
    span = hi - lo
    step = 10.0 ** math.floor(math.log10(span / 4))
    for mult in (1, 2, 5, 10):
        if span / (step * mult) <= 6:
            step *= mult
            break
    first = math.ceil(lo / step) * step
    out = []
    t = first
    while t <= hi + 1e-12 * abs(step):
        out.append(t)
        t += step
    return out


def _fmt_tick(t: float, log: bool) -> str:
    if log:
        return f"1e{t:g}"
    return f"{t:.4g}"


def line_chart(series: Sequence[Series], *, x_label: str, y_label: str,
               title: str = "", logx: bool = False, logy: bool = False,
               bands: Sequence[Band] = (), notes: Sequence[str] = ()) -> str:
    """Render series as an SVG document string; one <path> per series."""
    if not series:
        raise ValueError("need at least one series")
    all_x = [x for s in series for x in s.xs]
    all_y = [y for s in series for y in s.ys]
    for b in bands:
        all_y.extend(b.lower)
        all_y.extend(b.upper)
    if logx:
        floor = _log_floor(all_x)
        all_x = [max(x, floor) for x in all_x]
    if logy:
        floor_y = _log_floor(all_y)
        all_y = [max(y, floor_y) for y in all_y]
    x_lo, x_hi = _axis_range(all_x, logx)
    y_lo, y_hi = _axis_range(all_y, logy)

    def px(x: float) -> float:
        v = math.log10(max(x, 1e-300)) if logx else x
        return _ML + (v - x_lo) / (x_hi - x_lo) * (_W - _ML - _MR)

    def py(y: float) -> float:
        if logy:
            y = max(y, 1e-300)
        v = math.log10(y) if logy else y
        return _H - _MB - (v - y_lo) / (y_hi - y_lo) * (_H - _MT - _MB)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
    ]
    # axes
    parts.append(f'<line x1="{_ML}" y1="{_H - _MB}" x2="{_W - _MR}" y2="{_H - _MB}" '
                 'stroke="black" stroke-width="1"/>')
    parts.append(f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_H - _MB}" '
                 'stroke="black" stroke-width="1"/>')
    for t in _ticks(x_lo, x_hi, logx):
        x = _ML + (t - x_lo) / (x_hi - x_lo) * (_W - _ML - _MR)
        parts.append(f'<line x1="{x:.2f}" y1="{_H - _MB}" x2="{x:.2f}" '
                     f'y2="{_H - _MB + 5}" stroke="black" stroke-width="1"/>')
        parts.append(f'<text x="{x:.2f}" y="{_H - _MB + 18}" font-size="11" '
                     f'text-anchor="middle">{_fmt_tick(t, logx)}</text>')
    for t in _ticks(y_lo, y_hi, logy):
        y = _H - _MB - (t - y_lo) / (y_hi - y_lo) * (_H - _MT - _MB)
        parts.append(f'<line x1="{_ML - 5}" y1="{y:.2f}" x2="{_ML}" y2="{y:.2f}" '
                     'stroke="black" stroke-width="1"/>')
        parts.append(f'<text x="{_ML - 8}" y="{y + 4:.2f}" font-size="11" '
                     f'text-anchor="end">{_fmt_tick(t, logy)}</text>')
    parts.append(f'<text x="{(_ML + _W - _MR) / 2}" y="{_H - 12}" font-size="13" '
                 f'text-anchor="middle">{x_label}</text>')
    parts.append(f'<text x="16" y="{(_MT + _H - _MB) / 2}" font-size="13" '
                 f'text-anchor="middle" transform="rotate(-90 16 '
                 f'{(_MT + _H - _MB) / 2})">{y_label}</text>')
    if title:
        parts.append(f'<text x="{_W / 2}" y="24" font-size="15" '
                     f'text-anchor="middle">{title}</text>')

    for b in bands:
        color = _PALETTE[b.series_index % len(_PALETTE)]
        pts = [f"{px(x):.2f},{py(y):.2f}" for x, y in zip(b.xs, b.upper)]
        pts += [f"{px(x):.2f},{py(y):.2f}"
                for x, y in zip(reversed(list(b.xs)), reversed(list(b.lower)))]
        parts.append(f'<polygon points="{" ".join(pts)}" fill="{color}" '
                     'fill-opacity="0.15" stroke="none"/>')
    for i, s in enumerate(series):
        color = _PALETTE[i % len(_PALETTE)]
        coords = [f"{'M' if k == 0 else 'L'} {px(x):.2f} {py(y):.2f}"
                  for k, (x, y) in enumerate(zip(s.xs, s.ys))]
        parts.append(f'<path d="{" ".join(coords)}" fill="none" stroke="{color}" '
                     'stroke-width="1.8"/>')
        parts.append(f'<circle cx="{_W - _MR - 120}" cy="{_MT + 14 + 16 * i:.2f}" '
                     f'r="4" fill="{color}"/>')
        parts.append(f'<text x="{_W - _MR - 110}" y="{_MT + 18 + 16 * i:.2f}" '
                     f'font-size="12">{s.name}</text>')
    for j, note in enumerate(notes):
        parts.append(f'<text x="{_ML + 10}" y="{_MT + 16 + 14 * j}" '
                     f'font-size="12" fill="#333">{note}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
