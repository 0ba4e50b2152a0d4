"""Static SVG output: top-view court with trajectories, and per-frame error curves."""

from __future__ import annotations

from typing import Iterable, Sequence
from xml.sax.saxutils import escape

from .evaluation import ErrorReport
from .model import Player
from .synth import COURT_LENGTH_M, COURT_WIDTH_M
from .tracker import Source, Track

COLORS = {Player.NEAR: "#1f77b4", Player.FAR: "#d62728"}
PX_PER_M = 40.0
PAD = 30.0


def _num(v: float) -> str:
    return f"{v:.2f}"


def _polyline(pts: Sequence[tuple[float, float]], color: str, dashed: bool = False) -> str:
    coords = " ".join(f"{_num(x)},{_num(y)}" for x, y in pts)
    dash = ' stroke-dasharray="4,3"' if dashed else ""
    return (f'<polyline points="{coords}" fill="none" stroke="{color}" '
            f'stroke-width="1.5"{dash}/>')


def _runs(track: Track):
    """Split a track into consecutive runs; a run is dashed if it touches an interpolated point."""
    pts = [p for p in track.points if p.world is not None]
    runs = []
    for a, b in zip(pts, pts[1:]):
        dashed = Source.INTERPOLATED in (a.source, b.source)
        if runs and runs[-1][0] == dashed and runs[-1][1][-1] is a:
            runs[-1][1].append(b)
        else:
            runs.append((dashed, [a, b]))
    return runs


def render_court_svg(tracks: Iterable[Track], width_m: float = COURT_WIDTH_M,
                     length_m: float = COURT_LENGTH_M) -> str:
    """Top-view court outline with each player's world trajectory.

    Interpolated stretches are drawn dashed. World +y points up the page.
    """
    w = width_m * PX_PER_M + 2 * PAD
    h = length_m * PX_PER_M + 2 * PAD

    def to_svg(x: float, y: float) -> tuple[float, float]:
        return PAD + x * PX_PER_M, PAD + (length_m - y) * PX_PER_M

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_num(w)}" height="{_num(h)}" '
        f'viewBox="0 0 {_num(w)} {_num(h)}">',
        f'<rect x="0" y="0" width="{_num(w)}" height="{_num(h)}" fill="#2e7d32"/>',
        f'<rect x="{_num(PAD)}" y="{_num(PAD)}" width="{_num(width_m * PX_PER_M)}" '
        f'height="{_num(length_m * PX_PER_M)}" fill="none" stroke="white" stroke-width="2"/>',
    ]
    nx0, ny = to_svg(0, length_m / 2)
    nx1, _ = to_svg(width_m, length_m / 2)
    parts.append(f'<line x1="{_num(nx0)}" y1="{_num(ny)}" x2="{_num(nx1)}" y2="{_num(ny)}" '
                 f'stroke="white" stroke-width="3"/>')
    for track in tracks:
        color = COLORS.get(track.player, "black")
        parts.append(f'<g id="{escape(track.player.value)}">')
        for dashed, run in _runs(track):
            parts.append(_polyline([to_svg(p.world.x, p.world.y) for p in run], color, dashed))
        parts.append("</g>")
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_error_svg(reports: Sequence[ErrorReport], width: float = 640.0, height: float = 240.0) -> str:
    """Per-frame discrepancy curve for each player, frame id on x."""
    frames = [f for r in reports for f, _ in r.per_frame]
    errors = [e for r in reports for _, e in r.per_frame]
    f0, f1 = (min(frames), max(frames)) if frames else (0, 1)
    emax = max(errors) if errors and max(errors) > 0 else 1.0
    span = max(f1 - f0, 1)
    plot_w, plot_h = width - 2 * PAD, height - 2 * PAD

    def to_svg(f: float, e: float) -> tuple[float, float]:
        return PAD + (f - f0) / span * plot_w, PAD + plot_h - e / emax * plot_h

    unit = reports[0].unit if reports else "px"
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_num(width)}" height="{_num(height)}">',
        f'<line x1="{_num(PAD)}" y1="{_num(PAD + plot_h)}" x2="{_num(PAD + plot_w)}" '
        f'y2="{_num(PAD + plot_h)}" stroke="black"/>',
        f'<line x1="{_num(PAD)}" y1="{_num(PAD)}" x2="{_num(PAD)}" y2="{_num(PAD + plot_h)}" stroke="black"/>',
        f'<text x="{_num(PAD)}" y="{_num(PAD - 8)}" font-size="11">error ({escape(unit)}), max {emax:.3f}</text>',
        f'<text x="{_num(PAD + plot_w)}" y="{_num(height - 8)}" font-size="11" '
        f'text-anchor="end">frame {f0}..{f1}</text>',
    ]
    for r in reports:
        pts = [to_svg(f, e) for f, e in r.per_frame]
        parts.append(_polyline(pts, COLORS.get(r.player, "black")))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
