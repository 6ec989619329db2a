"""Measure ingestion and artifact emission for the command-line frontend.

CSV schemas: measures ``x1,...,xn,weight``; plans ``i,j,mass`` (sparse
triplets); frames ``t,id,x1,...,xn``.  Floats are printed with 17 significant
digits so every value round-trips.  SVG overlays are emitted directly
(polylines plus markers, viewBox from the data bounds with a 5% margin).
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence

import numpy as np

from .kantorovich import DiscreteMeasure, DualPotentials, TransportPlan
from .monge import InterpolationFrames

__all__ = [
    "fmt",
    "read_measure",
    "write_measure_csv",
    "write_plan_csv",
    "write_frames_csv",
    "write_json",
    "frames_svg",
]


def fmt(v: float) -> str:
    """Round-trip float formatting (17 significant digits)."""
    return format(float(v), ".17g")


def read_measure(path) -> DiscreteMeasure:
    """Load a measure from CSV (header x1..xn,weight) or JSON
    ({"points": [[...]], "weights": [...]})."""
    path = Path(path)
    if path.suffix.lower() == ".json":
        data = json.loads(path.read_text())
        return DiscreteMeasure(np.asarray(data["points"], dtype=float),
                               np.asarray(data["weights"], dtype=float))
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"empty measure file {path}")
    header = [h.strip().lower() for h in rows[0]]
    if header[-1] != "weight" or not all(h.startswith("x") for h in header[:-1]):
        raise ValueError(f"measure CSV must have header x1,...,xn,weight; got {header}")
    body = np.asarray([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    return DiscreteMeasure(body[:, :-1], body[:, -1])


def write_measure_csv(path, mu: DiscreteMeasure) -> None:
    n = mu.dim
    lines = [",".join([f"x{i+1}" for i in range(n)] + ["weight"])]
    for pt, w in zip(mu.points, mu.weights):
        lines.append(",".join([fmt(v) for v in pt] + [fmt(w)]))
    Path(path).write_text("\n".join(lines) + "\n")


def write_plan_csv(path, plan: TransportPlan, tol: float = 1e-14) -> None:
    lines = ["i,j,mass"]
    for i, j in np.argwhere(plan.matrix > tol):
        lines.append(f"{i},{j},{fmt(plan.matrix[i, j])}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_frames_csv(path, frames: InterpolationFrames) -> None:
    n = frames.clouds.shape[2]
    lines = [",".join(["t", "id"] + [f"x{i+1}" for i in range(n)])]
    for t, cloud in zip(frames.times, frames.clouds):
        for pid, pt in enumerate(cloud):
            lines.append(",".join([fmt(t), str(pid)] + [fmt(v) for v in pt]))
    Path(path).write_text("\n".join(lines) + "\n")


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _bounds_with_margin(points: np.ndarray, margin: float = 0.05):
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    span = np.maximum(hi - lo, 1e-9)
    return lo - margin * span, hi + margin * span


def frames_svg(frames: InterpolationFrames, width: int = 640, height: int = 640) -> str:
    """Overlay plot of all frames: one polyline per transported point,
    markers at every sampled time (first two coordinates are drawn)."""
    clouds = frames.clouds[:, :, :2]
    pts = clouds.reshape(-1, 2)
    lo, hi = _bounds_with_margin(pts)
    span = hi - lo

    def to_px(p):
        sx = (p[0] - lo[0]) / span[0] * width
        sy = height - (p[1] - lo[1]) / span[1] * height
        return f"{sx:.3f},{sy:.3f}"

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {width} {height}" '
        f'width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    m = clouds.shape[1]
    for pid in range(m):
        path = " ".join(to_px(clouds[k, pid]) for k in range(len(frames.times)))
        parts.append(
            f'<polyline points="{path}" fill="none" stroke="#1f77b4" stroke-width="1.2"/>'
        )
    for k in range(len(frames.times)):
        shade = int(200 * (1 - frames.times[k]))
        color = f"rgb({55 + shade},{shade},{shade})"
        for pid in range(m):
            x, y = clouds[k, pid]
            sx = (x - lo[0]) / span[0] * width
            sy = height - (y - lo[1]) / span[1] * height
            parts.append(f'<circle cx="{sx:.3f}" cy="{sy:.3f}" r="2.5" fill="{color}"/>')
    parts.append("</svg>")
    return "\n".join(parts)
