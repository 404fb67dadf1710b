"""Gantt chart of a schedule as a standalone SVG document."""

from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

from .stn import Schedule

PALETTE = ("#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#edc948", "#b07aa1")


def render_gantt(schedule: Schedule, units: list[str] | None = None, width: int = 900,
                 row_height: int = 48, title: str | None = None) -> str:
    """One row per unit, one bar per batch labelled with volume and duration."""
    if units is None:
        units = []
        for b in sorted(schedule.batches, key=lambda b: (b.start, b.unit)):
            if b.unit not in units:
                units.append(b.unit)
    tasks = sorted({b.task for b in schedule.batches})
    colour = {t: PALETTE[k % len(PALETTE)] for k, t in enumerate(tasks)}

    left, right, top = 110, 20, 40 if title else 16
    axis = 30
    height = top + row_height * max(len(units), 1) + axis + 24
    span = max(schedule.horizon, schedule.makespan, 1e-9)
    scale = (width - left - right) / span

    def X(t: float) -> str:
        return f"{left + t * scale:.2f}"

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="12">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>']
    if title:
        out.append(f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>')
    for k, unit in enumerate(units):
        y = top + k * row_height
        out.append(f'<text x="{left - 8}" y="{y + row_height / 2 + 4:.1f}" text-anchor="end">{escape(unit)}</text>')
        out.append(f'<line x1="{left}" y1="{y + row_height}" x2="{width - right}" y2="{y + row_height}" '
                   f'stroke="#ddd"/>')
    for b in sorted(schedule.batches, key=lambda b: (units.index(b.unit) if b.unit in units else 0, b.start)):
        if b.unit not in units:
            continue
        y = top + units.index(b.unit) * row_height + 6
        w = max(b.duration * scale, 1.0)
        out.append(f'<rect x="{X(b.start)}" y="{y}" width="{w:.2f}" height="{row_height - 12}" '
                   f'fill="{colour[b.task]}" stroke="black" stroke-width="0.6">'
                   f'<title>{escape(b.task)} event {b.event}</title></rect>')
        label = f"V={b.volume:.2f} t={b.duration:.2f}"
        if b.utility:
            label += f" Q={b.utility:.1f}"
        out.append(f'<text x="{left + (b.start + b.duration / 2) * scale:.2f}" '
                   f'y="{y + (row_height - 12) / 2 + 4:.1f}" text-anchor="middle" font-size="10">'
                   f'{escape(label)}</text>')
    y0 = top + row_height * max(len(units), 1)
    out.append(f'<line x1="{left}" y1="{y0}" x2="{width - right}" y2="{y0}" stroke="black"/>')
    step = 1 if span <= 24 else 10 ** math.floor(math.log10(span / 4))
    t = 0.0
    while t <= span + 1e-9:
        out.append(f'<line x1="{X(t)}" y1="{y0}" x2="{X(t)}" y2="{y0 + 5}" stroke="black"/>')
        out.append(f'<text x="{X(t)}" y="{y0 + 18}" text-anchor="middle">{t:g}</text>')
        t += step
    out.append(f'<text x="{(left + width - right) / 2:.1f}" y="{height - 4}" text-anchor="middle">time (h)</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_gantt(schedule: Schedule, path, **kwargs) -> Path:
    path = Path(path)
    path.write_text(render_gantt(schedule, **kwargs))
    return path
