"""Minimal SVG output for planar tables, momentum bodies and bounce polygons."""

from xml.sax.saxutils import escape

import numpy as np

from .bodies import DimensionError


def outline(K, samples=400):
    """Boundary of a planar body traced radially."""
    if K.dim != 2:
        raise DimensionError("outlines are planar only")
    t = np.linspace(0.0, 2 * np.pi, samples, endpoint=False)
    return np.atleast_2d(K.boundary_point(np.column_stack([np.cos(t), np.sin(t)])))


def _fmt(pts, scale, shift):
    return " ".join(f"{x * scale + shift[0]:.4f},{-y * scale + shift[1]:.4f}" for x, y in pts)


def billiard_svg(K, T=None, polygon=None, *, t_scale=None, metadata=None, closed=True,
                 size=480, title=None):
    """SVG text showing bd K, a scaled copy of bd T and the bounce polygon.

    ``T`` is drawn at ``t_scale`` (default: fitted to half of K's extent).
    ``metadata`` is a mapping written into ``<metadata>`` as ``key=value`` lines.
    ``closed=False`` draws an open path for traced orbits.
    """
    k_pts = outline(K)
    extent = float(np.abs(k_pts).max())
    t_pts = None
    if T is not None:
        t_raw = outline(T)
        if t_scale is None:
            t_scale = 0.5 * extent / float(np.abs(t_raw).max())
        t_pts = t_raw * t_scale
    scale = 0.45 * size / extent
    shift = (size / 2, size / 2)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">']
    if title:
        out.append(f"<title>{escape(title)}</title>")
    if metadata:
        lines = "\n".join(f"{k}={v}" for k, v in metadata.items())
        out.append(f"<metadata>{escape(lines)}</metadata>")
    out.append('<rect width="100%" height="100%" fill="white"/>')
    out.append(f'<polygon id="K" points="{_fmt(k_pts, scale, shift)}" fill="none" '
               'stroke="black" stroke-width="1.5"/>')
    if t_pts is not None:
        out.append(f'<polygon id="T" points="{_fmt(t_pts, scale, shift)}" fill="none" '
                   f'stroke="gray" stroke-dasharray="4 3" data-scale="{t_scale:.6g}"/>')
    if polygon is not None and len(polygon):
        P = np.asarray(polygon, dtype=float)
        tag = "polygon" if closed else "polyline"
        out.append(f'<{tag} id="orbit" points="{_fmt(P, scale, shift)}" fill="none" '
                   'stroke="crimson" stroke-width="1.2"/>')
        for x, y in P:
            out.append(f'<circle cx="{x * scale + shift[0]:.4f}" cy="{-y * scale + shift[1]:.4f}" '
                       'r="3" fill="crimson"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
