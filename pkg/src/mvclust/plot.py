"""Standalone SVG scatter plots of 2-D points coloured by label."""

from __future__ import annotations

import os
from xml.sax.saxutils import escape

import numpy as np

from .errors import DataFormatError, DomainError, UsageError
from .model import predict

PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)
WIDTH = HEIGHT = 400
PAD = 30  # pixels between the canvas edge and the plot area
MARGIN = 0.05  # fraction of the data range added on each side
RADIUS = 2.5


def to_2d(x) -> np.ndarray:
    """Raw coordinates for width 2, the top two principal components for
    wider data, zero-padded for width 1."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise UsageError(f"expected an (n, d) array, got shape {x.shape}")
    n, d = x.shape
    if d == 2:
        return x.copy()
    if d < 2 or n == 0:
        out = np.zeros((n, 2))
        out[:, :d] = x[:, :2]
        return out
    centred = x - x.mean(axis=0)
    _, _, vt = np.linalg.svd(centred, full_matrices=False)
    comps = vt[:2]
    # fix the sign of each component so the projection is reproducible
    signs = np.sign(comps[np.arange(comps.shape[0]), np.abs(comps).argmax(axis=1)])
    comps = comps * np.where(signs == 0, 1.0, signs)[:, None]
    out = np.zeros((n, 2))
    out[:, :comps.shape[0]] = centred @ comps.T
    return out


def _axis_range(values: np.ndarray) -> tuple[float, float]:
    if values.size == 0:
        return 0.0, 1.0
    lo, hi = float(values.min()), float(values.max())
    span = hi - lo
    if span == 0.0:
        span = max(abs(lo), 1.0)
        lo, hi = lo - span / 2, hi + span / 2
        span = hi - lo
    return lo - MARGIN * span, hi + MARGIN * span


def render_svg(points, labels=None, title: str | None = None) -> str:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2) if np.size(points) else np.zeros((0, 2))
    if not np.all(np.isfinite(pts)):
        raise DomainError("scatter coordinates must be finite")
    if labels is None:
        labs = np.zeros(len(pts), dtype=np.int64)
    else:
        labs = np.asarray(labels).reshape(-1)
        if labs.shape[0] != pts.shape[0]:
            raise UsageError(f"{pts.shape[0]} points but {labs.shape[0]} labels")
    # colours follow the sorted distinct labels
    _, codes = np.unique(labs, return_inverse=True) if labs.size else (None, labs)

    x0, x1 = _axis_range(pts[:, 0])
    y0, y1 = _axis_range(pts[:, 1])
    inner_w, inner_h = WIDTH - 2 * PAD, HEIGHT - 2 * PAD
    px = PAD + (pts[:, 0] - x0) / (x1 - x0) * inner_w
    py = HEIGHT - PAD - (pts[:, 1] - y0) / (y1 - y0) * inner_h

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<line class="axis" x1="{PAD}" y1="{HEIGHT - PAD}" x2="{WIDTH - PAD}" y2="{HEIGHT - PAD}" stroke="black"/>',
        f'<line class="axis" x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{HEIGHT - PAD}" stroke="black"/>',
        f'<text x="{PAD}" y="{HEIGHT - PAD / 3:.1f}" font-size="10">{x0:.3g}</text>',
        f'<text x="{WIDTH - PAD}" y="{HEIGHT - PAD / 3:.1f}" font-size="10" text-anchor="end">{x1:.3g}</text>',
        f'<text x="{PAD / 6:.1f}" y="{HEIGHT - PAD}" font-size="10">{y0:.3g}</text>',
        f'<text x="{PAD / 6:.1f}" y="{PAD - 4}" font-size="10">{y1:.3g}</text>',
    ]
    if title:
        out.append(f'<text x="{WIDTH / 2}" y="{PAD / 2 + 4}" font-size="13" text-anchor="middle">{escape(title)}</text>')
    for x, y, c in zip(px, py, codes):
        out.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{RADIUS}" fill="{PALETTE[int(c) % len(PALETTE)]}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_svg_scatter(points, labels, path, title: str | None = None) -> None:
    svg = render_svg(points, labels, title)
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(svg)
    except OSError as exc:
        raise DataFormatError(f"cannot write SVG to {path}: {exc.strerror or exc}") from None


def representation_panels(state, ds, out_dir) -> list[str]:
    """SVGs of each raw view, each view representation and the fused
    representation, coloured by ground-truth label (or by predicted cluster
    for unlabelled data).  Returns the written paths."""
    pred, fwd = predict(state, ds.views)
    colours = ds.labels if ds.labels is not None else pred
    os.makedirs(out_dir, exist_ok=True)
    panels: list[tuple[str, np.ndarray, str]] = []
    for v, x in enumerate(ds.views):
        panels.append((f"view{v}_input.svg", x, f"view {v} input"))
    for v, rep in enumerate(fwd.reps):
        panels.append((f"view{v}_representation.svg", rep.data, f"view {v} representation"))
    panels.append(("fused.svg", fwd.fused.data, "fused representation"))
    written = []
    for name, x, title in panels:
        path = os.path.join(out_dir, name)
        emit_svg_scatter(to_2d(x), colours, path, title)
        written.append(path)
    return written
