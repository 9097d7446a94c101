"""Deterministic SVG output: bar charts with comparison intervals and
frame-by-frame animations with agents drawn as arrows."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence, Union

from .core import Trajectory

ARROW_FILL = "#1f4fbf"
BACKGROUND = "#b0b0b0"


def _num(v: float) -> str:
    return f"{v:.3f}".rstrip("0").rstrip(".") if math.isfinite(v) else "0"


def bar_chart(labels: Sequence[str], means: Sequence[float], half_widths: Sequence[float],
              title: str = "", width: int = 360, height: int = 260) -> str:
    """Vertical bars with error bars of the given half widths."""
    pad_l, pad_r, pad_t, pad_b = 48, 16, 28, 36
    plot_w, plot_h = width - pad_l - pad_r, height - pad_t - pad_b
    tops = [m + h for m, h in zip(means, half_widths) if math.isfinite(m) and math.isfinite(h)]
    ymax = max(tops) if tops else 1.0
    ymax = ymax * 1.1 if ymax > 0 else 1.0

    def y(v):
        return pad_t + plot_h * (1.0 - max(0.0, v) / ymax)

    n = max(1, len(labels))
    slot = plot_w / n
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-family="sans-serif" '
           f'font-size="13">{title}</text>',
           f'<line x1="{pad_l}" y1="{pad_t + plot_h}" x2="{pad_l + plot_w}" y2="{pad_t + plot_h}" '
           f'stroke="black"/>',
           f'<line x1="{pad_l}" y1="{pad_t}" x2="{pad_l}" y2="{pad_t + plot_h}" stroke="black"/>']
    for i in range(5):
        v = ymax * i / 4
        out.append(f'<text x="{pad_l - 4}" y="{y(v) + 4:.1f}" text-anchor="end" font-family="sans-serif" '
                   f'font-size="10">{v:.3g}</text>')
    for i, (lab, m, h) in enumerate(zip(labels, means, half_widths)):
        cx = pad_l + slot * (i + 0.5)
        bw = slot * 0.5
        if math.isfinite(m):
            out.append(f'<rect x="{cx - bw / 2:.1f}" y="{y(m):.1f}" width="{bw:.1f}" '
                       f'height="{pad_t + plot_h - y(m):.1f}" fill="{ARROW_FILL}"/>')
        if math.isfinite(m) and math.isfinite(h) and h > 0:
            lo, hi = y(m - h), y(m + h)
            out.append(f'<line x1="{cx:.1f}" y1="{lo:.1f}" x2="{cx:.1f}" y2="{hi:.1f}" stroke="black"/>')
            for yy in (lo, hi):
                out.append(f'<line x1="{cx - 6:.1f}" y1="{yy:.1f}" x2="{cx + 6:.1f}" y2="{yy:.1f}" '
                           f'stroke="black"/>')
        out.append(f'<text x="{cx:.1f}" y="{height - 14}" text-anchor="middle" font-family="sans-serif" '
                   f'font-size="11">{lab}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def arrow_points(x: float, y: float, heading: float, length: float) -> list[tuple[float, float]]:
    """Isosceles triangle pointing along ``heading``, apex at the front."""
    half_base = length * 0.35
    c, s = math.cos(heading), math.sin(heading)
    tip = (x + c * length * 0.6, y + s * length * 0.6)
    back = (x - c * length * 0.4, y - s * length * 0.4)
    left = (back[0] - s * half_base, back[1] + c * half_base)
    right = (back[0] + s * half_base, back[1] - c * half_base)
    return [tip, left, right]


def frame_svg(agents: Sequence[tuple[float, float, float]], bounds_min, bounds_max,
              scale: float = 40.0, arrow_length: float = 0.5) -> str:
    """One frame; ``agents`` holds ``(x, y, heading)`` in world units.

    All agents share the same arrow shape and fill so the controlled one is
    not distinguishable by appearance.
    """
    w = (bounds_max.x - bounds_min.x) * scale
    h = (bounds_max.y - bounds_min.y) * scale
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" height="{h:.0f}" '
           f'viewBox="0 0 {w:.0f} {h:.0f}">',
           f'<rect x="0" y="0" width="{w:.0f}" height="{h:.0f}" fill="{BACKGROUND}"/>']
    for x, y, heading in agents:
        # world y points up, SVG y points down
        pts = arrow_points(x, y, heading, arrow_length)
        px = " ".join(f"{_num((u - bounds_min.x) * scale)},{_num(h - (v - bounds_min.y) * scale)}"
                      for u, v in pts)
        out.append(f'<polygon points="{px}" fill="{ARROW_FILL}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _headings(traj: Trajectory) -> dict[int, float]:
    """Per-tick heading from the displacement to the next sample (or the previous)."""
    ticks = traj.ticks
    pts = traj.points
    out = {}
    last = 0.0
    for i, k in enumerate(ticks):
        j0, j1 = (i, i + 1) if i + 1 < len(ticks) else (i - 1, i)
        if j0 >= 0:
            d = pts[j1] - pts[j0]
            if math.hypot(d[0], d[1]) > 1e-12:
                last = math.atan2(d[1], d[0])
        out[int(k)] = last
    return out


def write_animation(trajectories: dict[str, Trajectory], bounds_min, bounds_max,
                    directory: Union[str, Path], stride: int = 1) -> list[Path]:
    """Write ``frame_00000.svg`` ... for every ``stride``-th tick."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    pos = {a: {int(k): (p.x, p.y) for k, p in t.samples} for a, t in trajectories.items()}
    head = {a: _headings(t) for a, t in trajectories.items()}
    ticks = sorted({k for d in pos.values() for k in d})
    paths = []
    for k in ticks[::max(1, stride)]:
        agents = [(pos[a][k][0], pos[a][k][1], head[a][k]) for a in sorted(pos) if k in pos[a]]
        path = directory / f"frame_{k:05d}.svg"
        path.write_text(frame_svg(agents, bounds_min, bounds_max), encoding="utf-8")
        paths.append(path)
    return paths
