"""Rendering bundled graphs as SVG or raster images.

Edge color encodes the bin (hue wheel for modal bins, darkening sequential
ramp for ordinal bins, distinct colors for nominal bins, or a blue-to-red
gradient along each edge for flow direction). Bundle weight is encoded by
alpha accumulation of overlapping edges and by stroke widths driven by the
density map at the segment endpoints.
"""

from __future__ import annotations

import colorsys
import math
from dataclasses import dataclass

import numpy as np
from PIL import Image, ImageDraw

from .bundler import BundleResult
from .model import DensityField

__all__ = [
    "ColorScheme",
    "RenderOptions",
    "color_for_bin",
    "width_for_segment",
    "render_svg",
    "render_png",
]

# qualitative palette, pairwise distinct up to 16 bins
_NOMINAL = (
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948",
    "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac", "#1f77b4", "#8c564b",
    "#2ca02c", "#d62728", "#9467bd", "#17becf",
)

_FLOW_SOURCE = (0.10, 0.25, 0.90)
_FLOW_TARGET = (0.90, 0.15, 0.10)

_LOG_GAIN = 9.0


@dataclass(frozen=True)
class ColorScheme:
    """How bin indices map to colors.

    kind is one of "sequential" (ordinal bins, darker means higher),
    "modal-hue" (cyclic bins on the hue circle), "nominal" (distinct
    colors), or "flow-blue-red" (gradient from source to target along each
    edge).
    """

    kind: str = "nominal"
    base_hue: float = 210.0
    lightness_range: tuple[float, float] = (0.85, 0.30)

    KINDS = ("sequential", "modal-hue", "nominal", "flow-blue-red")


def _hex_rgb(color: str) -> tuple[float, float, float]:
    c = color.lstrip("#")
    return tuple(int(c[i:i + 2], 16) / 255.0 for i in (0, 2, 4))


def color_for_bin(scheme: ColorScheme, bin_: int, bin_count: int
                  ) -> tuple[float, float, float, float]:
    """RGBA in [0, 1] for a bin; pure function of (scheme, bin, B)."""
    if bin_ < 0 or bin_ >= bin_count:
        raise ValueError(f"bin {bin_} out of range for {bin_count} bins")
    if scheme.kind == "modal-hue":
        hue = (bin_ / bin_count) % 1.0
        r, g, b = colorsys.hsv_to_rgb(hue, 0.85, 0.85)
        return (r, g, b, 1.0)
    if scheme.kind == "sequential":
        t = bin_ / max(bin_count - 1, 1)
        lo, hi = scheme.lightness_range
        light = lo + t * (hi - lo)
        r, g, b = colorsys.hls_to_rgb(scheme.base_hue / 360.0, light, 0.65)
        return (r, g, b, 1.0)
    if scheme.kind == "nominal":
        r, g, b = _hex_rgb(_NOMINAL[bin_ % len(_NOMINAL)])
        return (r, g, b, 1.0)
    if scheme.kind == "flow-blue-red":
        r, g, b = _flow_color(0.5)
        return (r, g, b, 1.0)
    raise ValueError(f"unknown color scheme kind {scheme.kind!r}")


def _flow_color(t: float) -> tuple[float, float, float]:
    return tuple(a + t * (b - a) for a, b in zip(_FLOW_SOURCE, _FLOW_TARGET))


@dataclass
class RenderOptions:
    """Stroke styling shared by the SVG and raster backends.

    Widths are in grid cells. ``alpha`` of None picks 0.15 for graphs with
    more than 1000 edges and 0.5 otherwise.
    """

    width_min: float = 0.6
    width_max: float = 4.0
    alpha: float | None = None
    log_widths: bool = False
    background: str | None = "#ffffff"

    def resolve_alpha(self, n_edges: int) -> float:
        if self.alpha is not None:
            return self.alpha
        return 0.15 if n_edges > 1000 else 0.5


def _layer_peaks(field: DensityField) -> np.ndarray:
    """Per-layer density maximum, ignoring the padding ring."""
    pad = int(math.ceil(field.transform.padding))
    v0, u0 = pad, pad
    v1 = field.values.shape[1] - pad
    u1 = field.values.shape[2] - pad
    if v1 <= v0 or u1 <= u0:
        core = field.values
    else:
        core = field.values[:, v0:v1, u0:u1]
    peaks = core.reshape(field.bin_count, -1).max(axis=1)
    return np.maximum(peaks, 0.0)


def _width_scale(ratio: float, log_scale: bool) -> float:
    r = min(max(ratio, 0.0), 1.0)
    if log_scale:
        return math.log1p(_LOG_GAIN * r) / math.log1p(_LOG_GAIN)
    return r


def width_for_segment(field: DensityField, layer: int, a, b,
                      w_min: float, w_max: float, log_scale: bool = False,
                      layer_peak: float | None = None) -> float:
    """Stroke width for the segment a-b (world points) of one edge.

    The width interpolates between w_min and w_max by the mean clamped
    density at the two endpoints relative to the layer maximum.
    """
    if w_min > w_max:
        raise ValueError("w_min must be <= w_max")
    peak = _layer_peaks(field)[layer] if layer_peak is None else layer_peak
    if peak <= 0:
        return w_min
    from ._kernels import bilinear_value
    rho = field.values[layer]
    ga = field.transform.world_to_grid(np.asarray(a, dtype=np.float64))
    gb = field.transform.world_to_grid(np.asarray(b, dtype=np.float64))
    da = max(float(bilinear_value(rho, ga[0], ga[1])), 0.0)
    db = max(float(bilinear_value(rho, gb[0], gb[1])), 0.0)
    d = 0.5 * (da + db)
    return w_min + (w_max - w_min) * _width_scale(d / peak, log_scale)


def _segment_widths(field: DensityField, layer: int, pts_grid: np.ndarray,
                    w_min: float, w_max: float, log_scale: bool,
                    peak: float) -> np.ndarray:
    """Vectorized per-segment widths for one polyline in grid coords."""
    if peak <= 0:
        return np.full(pts_grid.shape[0] - 1, w_min)
    rho = field.values[layer]
    nv, nu = rho.shape
    x = np.clip(pts_grid[:, 0], 0.0, nu - 1.000001)
    y = np.clip(pts_grid[:, 1], 0.0, nv - 1.000001)
    u0 = np.clip(np.floor(x).astype(np.int64), 0, nu - 2)
    v0 = np.clip(np.floor(y).astype(np.int64), 0, nv - 2)
    fx = x - u0
    fy = y - v0
    top = rho[v0, u0] + fx * (rho[v0, u0 + 1] - rho[v0, u0])
    bot = rho[v0 + 1, u0] + fx * (rho[v0 + 1, u0 + 1] - rho[v0 + 1, u0])
    dens = np.maximum(top + fy * (bot - top), 0.0)
    d = 0.5 * (dens[:-1] + dens[1:])
    ratio = np.clip(d / peak, 0.0, 1.0)
    if log_scale:
        ratio = np.log1p(_LOG_GAIN * ratio) / math.log1p(_LOG_GAIN)
    return w_min + (w_max - w_min) * ratio


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _rgb_hex(rgb: tuple[float, float, float]) -> str:
    return "#{:02x}{:02x}{:02x}".format(
        *(min(max(int(round(c * 255)), 0), 255) for c in rgb[:3]))


def render_svg(result: BundleResult, scheme: ColorScheme | None = None,
               options: RenderOptions | None = None) -> str:
    """Build an SVG document: one path group per edge, per-segment widths.

    Coordinates are world units; the viewBox covers the padded bounding
    box of the drawing with the y axis flipped to screen orientation.
    """
    scheme = scheme or ColorScheme()
    opts = options or RenderOptions()
    graph = result.graph
    field = result.density
    transform = field.transform
    x0, y0, w, h = transform.world_bounds()
    alpha = opts.resolve_alpha(graph.n_edges)
    peaks = _layer_peaks(field)
    cell = transform.cell_size
    uniform = opts.width_min == opts.width_max

    out = ['<?xml version="1.0" encoding="UTF-8"?>']
    out.append(f'<svg xmlns="http://www.w3.org/2000/svg" '
               f'viewBox="0 0 {_fmt(w)} {_fmt(h)}">')
    if opts.background:
        out.append(f'<rect x="0" y="0" width="{_fmt(w)}" height="{_fmt(h)}" '
                   f'fill="{opts.background}"/>')
    out.append('<g fill="none" stroke-linecap="round" '
               'stroke-linejoin="round">')
    for se in result.sampled_edges:
        e = se.edge_index
        bin_ = int(graph.bins[e])
        sx = se.points[:, 0] - x0
        sy = (y0 + h) - se.points[:, 1]
        flow = scheme.kind == "flow-blue-red"
        attrs = f' stroke-opacity="{_fmt(alpha)}"'
        if not flow:
            rgba = color_for_bin(scheme, bin_, field.bin_count)
            attrs += f' stroke="{_rgb_hex(rgba[:3])}"'
        out.append(f'<g class="edge"{attrs}>')
        if uniform and not flow:
            d = "M " + " L ".join(f"{_fmt(px)} {_fmt(py)}"
                                  for px, py in zip(sx, sy))
            out.append(f'<path d="{d}" '
                       f'stroke-width="{_fmt(opts.width_min * cell)}"/>')
        else:
            grid = transform.world_to_grid(se.points)
            widths = _segment_widths(field, bin_, grid, opts.width_min,
                                     opts.width_max, opts.log_widths,
                                     float(peaks[bin_]))
            arclen = _arc_positions(se.points) if flow else None
            for j in range(len(se) - 1):
                d = (f"M {_fmt(sx[j])} {_fmt(sy[j])} "
                     f"L {_fmt(sx[j + 1])} {_fmt(sy[j + 1])}")
                seg_attr = f' stroke-width="{_fmt(widths[j] * cell)}"'
                if flow:
                    t = 0.5 * (arclen[j] + arclen[j + 1])
                    seg_attr += f' stroke="{_rgb_hex(_flow_color(t))}"'
                out.append(f'<path d="{d}"{seg_attr}/>')
        out.append('</g>')
    out.append('</g>')
    out.append('</svg>')
    return "\n".join(out) + "\n"


def _arc_positions(points: np.ndarray) -> np.ndarray:
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    total = seg.sum()
    if total <= 0:
        return np.zeros(points.shape[0])
    pos = np.zeros(points.shape[0])
    np.cumsum(seg, out=pos[1:])
    return pos / total


def render_png(result: BundleResult, scheme: ColorScheme | None = None,
               options: RenderOptions | None = None,
               size: tuple[int, int] | None = None) -> Image.Image:
    """Rasterize the drawing with source-over alpha accumulation.

    Each edge is drawn on its own transparent tile and composited onto the
    canvas in edge-index order, so overlapping edges darken each other
    while overlaps within one edge do not double-accumulate.
    """
    scheme = scheme or ColorScheme()
    opts = options or RenderOptions()
    graph = result.graph
    field = result.density
    transform = field.transform
    x0, y0, w, h = transform.world_bounds()
    if size is None:
        size = (transform.width, transform.height)
    width_px, height_px = int(size[0]), int(size[1])
    if width_px <= 0 or height_px <= 0:
        raise ValueError("image dimensions must be positive")
    alpha = opts.resolve_alpha(graph.n_edges)
    peaks = _layer_peaks(field)
    px_per_cell = width_px / transform.width
    flow = scheme.kind == "flow-blue-red"

    bg = (0, 0, 0, 0)
    if opts.background:
        r, g, b = _hex_rgb(opts.background)
        bg = (int(r * 255), int(g * 255), int(b * 255), 255)
    canvas = Image.new("RGBA", (width_px, height_px), bg)

    for se in result.sampled_edges:
        e = se.edge_index
        bin_ = int(graph.bins[e])
        px = (se.points[:, 0] - x0) / w * width_px
        py = (1.0 - (se.points[:, 1] - y0) / h) * height_px
        grid = transform.world_to_grid(se.points)
        widths = _segment_widths(field, bin_, grid, opts.width_min,
                                 opts.width_max, opts.log_widths,
                                 float(peaks[bin_]))
        widths_px = np.maximum(widths * px_per_cell, 1.0)
        margin = int(math.ceil(widths_px.max() / 2)) + 2
        tx0 = max(int(math.floor(px.min())) - margin, 0)
        ty0 = max(int(math.floor(py.min())) - margin, 0)
        tx1 = min(int(math.ceil(px.max())) + margin, width_px)
        ty1 = min(int(math.ceil(py.max())) + margin, height_px)
        if tx1 <= tx0 or ty1 <= ty0:
            continue
        tile = Image.new("RGBA", (tx1 - tx0, ty1 - ty0), (0, 0, 0, 0))
        draw = ImageDraw.Draw(tile)
        a8 = int(round(alpha * 255))
        if not flow:
            rgba = color_for_bin(scheme, bin_, field.bin_count)
            fill = (int(rgba[0] * 255), int(rgba[1] * 255),
                    int(rgba[2] * 255), a8)
        arclen = _arc_positions(se.points) if flow else None
        for j in range(len(se) - 1):
            if flow:
                t = 0.5 * (arclen[j] + arclen[j + 1])
                r, g, b = _flow_color(t)
                fill = (int(r * 255), int(g * 255), int(b * 255), a8)
            lw = int(round(widths_px[j]))
            draw.line([(px[j] - tx0, py[j] - ty0),
                       (px[j + 1] - tx0, py[j + 1] - ty0)],
                      fill=fill, width=max(lw, 1))
            if lw > 2:
                rr = lw / 2.0
                for k in (j, j + 1):
                    draw.ellipse([px[k] - tx0 - rr, py[k] - ty0 - rr,
                                  px[k] - tx0 + rr, py[k] - ty0 + rr],
                                 fill=fill)
        canvas.alpha_composite(tile, (tx0, ty0))
    return canvas
