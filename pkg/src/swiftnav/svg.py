"""Dependency-free SVG output and the CSV readers that feed it.

Canvas is a fixed 960x540. The learning-curve plot area spans
x in [70, 890] and y in [40, 490]: episode index maps linearly onto x, the
smoothed step count onto the left axis and the smoothed return onto the right
axis, each scaled to its own [min, max] (padded when the series is flat).
Trajectory overlays map world coordinates into the same canvas with equal
x/y scale, y pointing up.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple

from .env import moving_average
from .world import World

WIDTH, HEIGHT = 960, 540
LEFT, RIGHT, TOP, BOTTOM = 70, 890, 40, 490
STEPS_COLOR = "#1f77b4"
RETURN_COLOR = "#d62728"
MODE_COLORS = {"Travel": "#2ca02c", "RL": "#d62728", "Landing": "#9467bd"}

LOG_HEADER = ["episode", "steps", "return", "success", "switches", "outcome"]
TRAJ_HEADER = ["t", "x", "y", "z", "mode"]


class CSVFormatError(ValueError):
    pass


@dataclass
class LogRow:
    episode: int
    steps: int
    ret: float
    success: bool
    switches: int
    outcome: str


def _read(path, header: List[str]):
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None or [c.strip() for c in first] != header:
            raise CSVFormatError(f"{path}: line 1: expected header {','.join(header)}")
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(header):
                raise CSVFormatError(f"{path}: line {line}: expected {len(header)} fields, got {len(row)}")
            yield line, [c.strip() for c in row]


def read_episode_log(path) -> List[LogRow]:
    rows = []
    for line, r in _read(path, LOG_HEADER):
        try:
            rows.append(LogRow(int(r[0]), int(r[1]), float(r[2]), r[3] in ("1", "true", "True"), int(r[4]), r[5]))
        except ValueError as exc:
            raise CSVFormatError(f"{path}: line {line}: {exc}") from None
    return rows


def read_trajectory(path) -> List[Tuple[float, float, float, float, str]]:
    out = []
    for line, r in _read(path, TRAJ_HEADER):
        try:
            out.append((float(r[0]), float(r[1]), float(r[2]), float(r[3]), r[4]))
        except ValueError as exc:
            raise CSVFormatError(f"{path}: line {line}: {exc}") from None
        if r[4] not in MODE_COLORS:
            raise CSVFormatError(f"{path}: line {line}: unknown mode {r[4]!r}")
    return out


def _axis_map(lo: float, hi: float, a: float, b: float):
    if hi - lo < 1e-12:
        lo, hi = lo - 1.0, hi + 1.0
    return lambda v: a + (v - lo) / (hi - lo) * (b - a), lo, hi


def _polyline(pts, color: str, width: float = 2.0) -> str:
    coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in pts)
    return f'<polyline fill="none" stroke="{color}" stroke-width="{width}" points="{coords}"/>'


def _header() -> List[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]


def learning_curves(rows: Sequence[LogRow], window: int = 15) -> Tuple[List[float], List[float]]:
    return moving_average([r.steps for r in rows], window), moving_average([r.ret for r in rows], window)


def learning_curve_svg(rows: Sequence[LogRow], window: int = 15, title: str = "") -> str:
    steps, rets = learning_curves(rows, window)
    out = _header()
    out.append(f'<rect x="{LEFT}" y="{TOP}" width="{RIGHT - LEFT}" height="{BOTTOM - TOP}" fill="none" stroke="#444"/>')
    out.append(f'<text x="{WIDTH / 2}" y="24" text-anchor="middle" font-size="16">{title or "learning curves"}</text>')
    if rows:
        n = len(rows)
        fx, _, _ = _axis_map(0, max(n - 1, 1), LEFT, RIGHT) if n > 1 else (lambda i: (LEFT + RIGHT) / 2, 0, 0)
        fs, s_lo, s_hi = _axis_map(min(steps), max(steps), BOTTOM, TOP)
        fr, r_lo, r_hi = _axis_map(min(rets), max(rets), BOTTOM, TOP)
        xs = [fx(i) for i in range(n)]
        for series, f, color in ((steps, fs, STEPS_COLOR), (rets, fr, RETURN_COLOR)):
            pts = [(x, f(v)) for x, v in zip(xs, series)]
            if n == 1:
                out.append(f'<circle cx="{pts[0][0]:.2f}" cy="{pts[0][1]:.2f}" r="3" fill="{color}"/>')
            else:
                out.append(_polyline(pts, color))
        for k in range(5):
            y = BOTTOM - k * (BOTTOM - TOP) / 4
            sv = s_lo + k * (s_hi - s_lo) / 4
            rv = r_lo + k * (r_hi - r_lo) / 4
            out.append(f'<text x="{LEFT - 6}" y="{y:.1f}" text-anchor="end" font-size="11" fill="{STEPS_COLOR}">{sv:.0f}</text>')
            out.append(f'<text x="{RIGHT + 6}" y="{y:.1f}" font-size="11" fill="{RETURN_COLOR}">{rv:.0f}</text>')
        out.append(f'<text x="{LEFT}" y="{BOTTOM + 18}" font-size="11">0</text>')
        out.append(f'<text x="{RIGHT}" y="{BOTTOM + 18}" text-anchor="end" font-size="11">{n - 1}</text>')
    out.append(f'<text x="{WIDTH / 2}" y="{BOTTOM + 36}" text-anchor="middle" font-size="12">episode</text>')
    out.append(f'<text x="20" y="{TOP - 10}" font-size="12" fill="{STEPS_COLOR}">steps ({window}-ep MA)</text>')
    out.append(f'<text x="{WIDTH - 20}" y="{TOP - 10}" text-anchor="end" font-size="12" fill="{RETURN_COLOR}">return ({window}-ep MA)</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def trajectory_svg(world: World, trajectories: Sequence[Sequence[Tuple[float, float, float, float, str]]],
                   title: str = "") -> str:
    b = world.bounds
    scale = min((RIGHT - LEFT) / (b.xmax - b.xmin), (BOTTOM - TOP) / (b.ymax - b.ymin))
    ox = LEFT + ((RIGHT - LEFT) - scale * (b.xmax - b.xmin)) / 2
    oy = BOTTOM - ((BOTTOM - TOP) - scale * (b.ymax - b.ymin)) / 2

    def P(x, y):
        return ox + scale * (x - b.xmin), oy - scale * (y - b.ymin)

    out = _header()
    x0, y0 = P(b.xmin, b.ymax)
    out.append(f'<rect x="{x0:.2f}" y="{y0:.2f}" width="{scale * (b.xmax - b.xmin):.2f}" '
               f'height="{scale * (b.ymax - b.ymin):.2f}" fill="#fafafa" stroke="#444"/>')
    out.append(f'<text x="{WIDTH / 2}" y="24" text-anchor="middle" font-size="16">{title or world.name}</text>')
    for o in world.obstacles:
        cx, cy = P(o.x, o.y)
        out.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="{scale * o.r:.2f}" fill="#888" stroke="#333"/>')
    for tr in trajectories:
        # split into runs of constant mode so each segment carries its mode colour
        run: List[Tuple[float, float]] = []
        mode = None
        for _, x, y, _, m in tr:
            p = P(x, y)
            if m != mode and run:
                run.append(p)
                out.append(_polyline(run, MODE_COLORS.get(mode, "#000"), 1.5))
                run = []
            mode = m
            run.append(p)
        if len(run) > 1:
            out.append(_polyline(run, MODE_COLORS.get(mode, "#000"), 1.5))
    for (x, y), color in ((world.start, "#000"), (world.goal, "#ff7f0e")):
        cx, cy = P(x, y)
        out.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="5" fill="{color}"/>')
    for k, (m, color) in enumerate(MODE_COLORS.items()):
        out.append(f'<text x="{LEFT + 90 * k}" y="{HEIGHT - 14}" font-size="12" fill="{color}">{m}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
