"""SVG drawings of predicted vs. true planar graphs.

The SVG is written by hand rather than through a plotting library so that the
bytes depend only on the input: no timestamps, ids or version strings.
"""

from __future__ import annotations

import numpy as np

SIZE = 512
MARGIN = 16
STROKES = {
    "agree": 'stroke="#222222" stroke-width="1.6"',
    "true_only": 'stroke="#1f77b4" stroke-width="1.6" stroke-dasharray="5,3"',
    "pred_only": 'stroke="#d62728" stroke-width="1.6"',
}


def _canvas(points: np.ndarray) -> np.ndarray:
    """Map the unit square onto the viewport, y pointing up."""
    span = SIZE - 2 * MARGIN
    x = MARGIN + points[:, 0] * span
    y = SIZE - MARGIN - points[:, 1] * span
    return np.stack([x, y], axis=1)


def _pairs(adj: np.ndarray) -> set[tuple[int, int]]:
    i, j = np.nonzero(np.triu(adj, 1))
    return set(zip(i.tolist(), j.tolist()))


def edge_classes(true_edges: np.ndarray, pred_edges: np.ndarray) -> dict[str, list[tuple[int, int]]]:
    t, p = _pairs(true_edges), _pairs(pred_edges)
    return {
        "agree": sorted(t & p),
        "true_only": sorted(t - p),
        "pred_only": sorted(p - t),
    }


def render_triangulation_svg(points, true_edges, pred_edges) -> str:
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 2:
        raise ValueError(f"expected n x 2 points, got shape {points.shape}")
    n = len(points)
    true_edges = np.asarray(true_edges, dtype=bool)
    pred_edges = np.asarray(pred_edges, dtype=bool)
    if true_edges.shape != (n, n) or pred_edges.shape != (n, n):
        raise ValueError("edge matrices must be n x n")
    xy = _canvas(points)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">',
        f'<rect x="0" y="0" width="{SIZE}" height="{SIZE}" fill="#ffffff"/>',
    ]
    for cls, edges in edge_classes(true_edges, pred_edges).items():
        if not edges:
            continue
        out.append(f'<g class="{cls}" fill="none" {STROKES[cls]}>')
        for i, j in edges:
            out.append(
                f'<line x1="{xy[i, 0]:.2f}" y1="{xy[i, 1]:.2f}" x2="{xy[j, 0]:.2f}" y2="{xy[j, 1]:.2f}"/>'
            )
        out.append("</g>")
    out.append('<g class="points" fill="#000000">')
    for x, y in xy:
        out.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3"/>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
