"""SVG drawing of a discrete curve with density-weighted stroke widths."""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .discretization import DiscreteState, discrete_energy, reconstruct_curve
from .model import ModelParams

WIDTH_EPS = 1e-12


def stroke_widths(rho: np.ndarray, base: float, scale: float) -> np.ndarray:
    """``base * (1 + scale * (rho - min) / (max - min + eps))`` per side."""
    rho = np.asarray(rho, dtype=float)
    lo, hi = rho.min(), rho.max()
    return base * (1.0 + scale * (rho - lo) / (hi - lo + WIDTH_EPS))


def render_svg(state: DiscreteState, params: ModelParams, base: float = 0.012, scale: float = 3.0,
               label: str | None = None, pixels: int = 480) -> str:
    """Return an SVG document drawing one segment per side of the polygon.

    The view box fits the curve plus the widest stroke with a 5% margin.
    The default corner label lists ``mu``, the energy and ``(m, h)``.
    """
    for name, arr in (("rho", state.rho), ("theta", state.theta), ("lambda", state.lam)):
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"non-finite values in {name}")
    pts = reconstruct_curve(state.theta, state.grid)
    pts[:, 1] *= -1.0  # SVG y axis points down
    widths = stroke_widths(state.rho, base, scale)
    lo = pts.min(axis=0) - widths.max() / 2
    hi = pts.max(axis=0) + widths.max() / 2
    span = float((hi - lo).max())
    margin = 0.05 * span
    x0, y0 = lo - margin
    size = span + 2 * margin
    if label is None:
        energy = discrete_energy(state, params)
        label = f"mu={params.mu:.6g}  E={energy:.8g}  m={params.m:g}  h={params.h:g}"
    font = 0.035 * size
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{pixels}" height="{pixels}" '
        f'viewBox="{x0:.6f} {y0:.6f} {size:.6f} {size:.6f}">',
        f'<rect x="{x0:.6f}" y="{y0:.6f}" width="{size:.6f}" height="{size:.6f}" fill="white"/>',
        '<g stroke="black" stroke-linecap="round" fill="none">',
    ]
    for i, w in enumerate(widths):
        (xa, ya), (xb, yb) = pts[i], pts[i + 1]
        lines.append(
            f'<line x1="{xa:.6f}" y1="{ya:.6f}" x2="{xb:.6f}" y2="{yb:.6f}" stroke-width="{w:.6f}"/>'
        )
    lines.append("</g>")
    lines.append(
        f'<text x="{x0 + margin / 2:.6f}" y="{y0 + margin / 2 + font:.6f}" font-size="{font:.6f}" '
        f'font-family="monospace">{escape(label)}</text>'
    )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def write_svg(path, state: DiscreteState, params: ModelParams, **kwargs) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_svg(state, params, **kwargs))
    return path
