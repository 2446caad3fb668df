"""Minimal hand-emitted SVG polyline plots (no plotting dependency).

Trajectories render as polylines in a fixed viewport; simplex trajectories
use barycentric coordinates with the triangle outline drawn. Output is
deterministic for identical inputs.
"""
from __future__ import annotations

import numpy as np

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")

_TRI = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3.0) / 2.0]])


def barycentric_xy(p: np.ndarray) -> np.ndarray:
    """Map simplex weights (n x 3) to 2-d triangle coordinates."""
    p = np.atleast_2d(np.asarray(p, dtype=float))
    return p @ _TRI


def _fmt(x: float) -> str:
    return f"{x:.3f}"


def polyline_svg(
    curves: list,
    labels: list | None = None,
    size: int = 480,
    margin: float = 40.0,
    triangle: bool = False,
    title: str = "",
) -> str:
    """Render 2-d curves [(n_i x 2 arrays)] as an SVG document string."""
    pts = np.vstack([np.atleast_2d(c) for c in curves]) if curves else np.zeros((1, 2))
    if triangle:
        pts = np.vstack([pts, _TRI])
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    span = np.maximum(hi - lo, 1e-12)
    scale = (size - 2 * margin) / span.max()

    def to_px(xy):
        xy = np.atleast_2d(xy)
        px = margin + (xy[:, 0] - lo[0]) * scale
        py = size - margin - (xy[:, 1] - lo[1]) * scale
        return np.stack([px, py], axis=1)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
    ]
    if title:
        parts.append(
            f'<text x="{size / 2:.0f}" y="20" text-anchor="middle" '
            f'font-family="sans-serif" font-size="14">{title}</text>'
        )
    if triangle:
        tri_px = to_px(_TRI)
        path = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in tri_px)
        parts.append(f'<polygon points="{path}" fill="none" stroke="#888" stroke-width="1"/>')
    for idx, curve in enumerate(curves):
        color = _COLORS[idx % len(_COLORS)]
        px = to_px(curve)
        path = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in px)
        parts.append(
            f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.2"/>'
        )
        sx, sy = px[0]
        parts.append(f'<circle cx="{_fmt(sx)}" cy="{_fmt(sy)}" r="3" fill="{color}"/>')
        if labels and idx < len(labels):
            parts.append(
                f'<text x="{size - margin:.0f}" y="{margin + 16 * idx:.0f}" '
                f'text-anchor="end" font-family="sans-serif" font-size="12" '
                f'fill="{color}">{labels[idx]}</text>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def project_3d(points: np.ndarray) -> np.ndarray:
    """Fixed isometric projection of 3-d points onto the plot plane."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    u = np.array([[1.0, -0.5], [0.0, 1.0], [-0.7, -0.35]])
    return points @ u
