"""Line rasterization into accumulation grids and fast histogram smoothing.

Accumulation and smoothed density grids are single precision; integral
images are double precision so box sums over an 800x800 grid do not lose
mass to cancellation. Gaussian smoothing is approximated by a short cascade
of box filters whose widths are chosen to match the target variance, each
applied in O(U*V) through an integral image.
"""

from __future__ import annotations

import math
from typing import Sequence, TextIO

import numpy as np

from . import _kernels
from ._parallel import map_partitions
from .model import DensityField, Graph, GridTransform, SampledEdge

__all__ = [
    "rasterize_segment",
    "accumulate_edges",
    "integral_image",
    "box_sum",
    "box_filter",
    "box_widths",
    "smooth_gaussian_approx",
    "write_pgm",
]


def rasterize_segment(p0, p1) -> np.ndarray:
    """8-connected cell chain from round(p0) to round(p1), inclusive.

    Returns an (n, 2) int64 array of (u, v) cells; each cell appears once
    and the chain is monotone in the dominant axis.
    """
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    x0 = int(math.floor(p0[0] + 0.5))
    y0 = int(math.floor(p0[1] + 0.5))
    x1 = int(math.floor(p1[0] + 0.5))
    y1 = int(math.floor(p1[1] + 0.5))
    dx = x1 - x0
    dy = y1 - y0
    steps = max(abs(dx), abs(dy))
    if steps == 0:
        return np.array([[x0, y0]], dtype=np.int64)
    inv = 1.0 / steps
    k = np.arange(steps + 1, dtype=np.float64)
    u = np.floor(x0 + k * dx * inv + 0.5).astype(np.int64)
    v = np.floor(y0 + k * dy * inv + 0.5).astype(np.int64)
    return np.stack([u, v], axis=1)


def _check_bounds(pts: np.ndarray, width: int, height: int) -> None:
    if pts.size == 0:
        return
    xmin = pts[:, 0].min()
    xmax = pts[:, 0].max()
    ymin = pts[:, 1].min()
    ymax = pts[:, 1].max()
    if xmin <= -0.5 or ymin <= -0.5 or xmax >= width - 0.5 or ymax >= height - 0.5:
        raise ValueError(
            f"sample out of bounds: points span ({xmin:.3f}, {ymin:.3f}) to "
            f"({xmax:.3f}, {ymax:.3f}) on a {width}x{height} grid")


def _accumulate_packed(pts: np.ndarray, starts: np.ndarray,
                       layer_weights: np.ndarray, shape: tuple[int, int],
                       workers: int = 1) -> np.ndarray:
    """Accumulate packed grid-space polylines into a fresh (B, V, U) array.

    Each worker fills a private full-size buffer over its contiguous edge
    range; buffers are summed in ascending worker order, so the result is
    reproducible for any worker count (and exact whenever the per-cell sums
    are exact, e.g. integer weights).
    """
    height, width = shape
    nbins = layer_weights.shape[1]
    _check_bounds(pts, width, height)
    n_edges = starts.size - 1

    def run(lo: int, hi: int) -> np.ndarray:
        buf = np.zeros((nbins, height, width), dtype=np.float32)
        _kernels.accumulate(pts, starts, layer_weights, buf, lo, hi)
        return buf

    buffers = map_partitions(run, n_edges, workers)
    out = buffers[0]
    for buf in buffers[1:]:
        out += buf
    return out


def _pack_world(sampled: Sequence[SampledEdge], transform: GridTransform):
    counts = np.fromiter((len(se) for se in sampled), dtype=np.int64,
                         count=len(sampled))
    starts = np.zeros(len(sampled) + 1, dtype=np.int64)
    np.cumsum(counts, out=starts[1:])
    pts = np.empty((int(starts[-1]), 2), dtype=np.float64)
    for i, se in enumerate(sampled):
        pts[starts[i]:starts[i + 1]] = se.points
    return transform.world_to_grid(pts), starts


def accumulate_edges(sampled: Sequence[SampledEdge], graph: Graph,
                     matrix: np.ndarray, transform: GridTransform,
                     workers: int = 1) -> DensityField:
    """Build the raw multi-layer histogram H from sampled edges.

    Every rasterized cell of edge e adds ``weight_e * matrix[l, bin_e]`` to
    each layer l. Raises ValueError if a sample falls outside the grid,
    which indicates a transform or padding bug upstream.
    """
    matrix = np.asarray(matrix, dtype=np.float32)
    nbins = matrix.shape[0]
    if matrix.shape != (nbins, nbins):
        raise ValueError("interaction matrix must be square")
    if graph.n_edges and graph.bins.max() >= nbins:
        raise ValueError("edge bin exceeds interaction matrix size")
    pts, starts = _pack_world(sampled, transform)
    edge_idx = np.fromiter((se.edge_index for se in sampled), dtype=np.int64,
                           count=len(sampled))
    weights = graph.weights[edge_idx].astype(np.float32)
    layer_w = weights[:, None] * matrix.T[graph.bins[edge_idx]]
    values = _accumulate_packed(pts, starts, np.ascontiguousarray(layer_w),
                                transform.shape, workers)
    return DensityField(transform, values)


def integral_image(layer: np.ndarray) -> np.ndarray:
    """(V+1, U+1) double-precision table of sums over rows < v, cols < u."""
    height, width = layer.shape
    table = np.zeros((height + 1, width + 1), dtype=np.float64)
    table[1:, 1:] = np.cumsum(np.cumsum(layer, axis=0, dtype=np.float64),
                              axis=1)
    return table


def box_sum(table: np.ndarray, v0: int, v1: int, u0: int, u1: int) -> float:
    """Sum of the layer over rows [v0, v1) and columns [u0, u1)."""
    return float(table[v1, u1] - table[v0, u1] - table[v1, u0] + table[v0, u0])


def box_filter(layer: np.ndarray, radius: int) -> np.ndarray:
    """Mean filter over the (2r+1)^2 window, zero padded outside the grid.

    The window is always normalized by its full area, so the filter is
    strictly linear and preserves total mass away from the boundary. Cost
    is O(U*V) independent of the radius.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if radius == 0:
        return layer.copy()
    height, width = layer.shape
    table = integral_image(layer)
    v = np.arange(height)
    u = np.arange(width)
    r0 = np.clip(v - radius, 0, height)
    r1 = np.clip(v + radius + 1, 0, height)
    c0 = np.clip(u - radius, 0, width)
    c1 = np.clip(u + radius + 1, 0, width)
    sums = (table[np.ix_(r1, c1)] - table[np.ix_(r0, c1)]
            - table[np.ix_(r1, c0)] + table[np.ix_(r0, c0)])
    area = float((2 * radius + 1) ** 2)
    return (sums / area).astype(layer.dtype)


def box_widths(sigma: float, passes: int) -> list[int]:
    """Odd box widths whose cascade variance approximates sigma^2.

    Uses the two nearest odd widths around the ideal width
    sqrt(12*sigma^2/n + 1), mixing them so the summed variance
    n_l*(w_l^2-1)/12 + n_u*(w_u^2-1)/12 best matches the target.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if passes < 1:
        raise ValueError("passes must be >= 1")
    n = passes
    w_ideal = math.sqrt(12.0 * sigma * sigma / n + 1.0)
    w_lo = int(math.floor(w_ideal))
    if w_lo % 2 == 0:
        w_lo -= 1
    w_lo = max(w_lo, 1)
    w_hi = w_lo + 2
    m_ideal = (12.0 * sigma * sigma - n * w_lo * w_lo - 4.0 * n * w_lo
               - 3.0 * n) / (-4.0 * w_lo - 4.0)
    m = min(max(int(round(m_ideal)), 0), n)
    return [w_lo] * m + [w_hi] * (n - m)


def _smooth_layer(layer: np.ndarray, widths: Sequence[int]) -> np.ndarray:
    out = layer
    for w in widths:
        out = box_filter(out, (w - 1) // 2)
    return out


def smooth_gaussian_approx(field: DensityField, sigma: float,
                           passes: int = 3, workers: int = 1) -> DensityField:
    """Approximate Gaussian smoothing of every layer by iterated box filters.

    Three passes are enough for bundling-quality density maps; layers are
    independent, so they can be smoothed on parallel workers.
    """
    widths = box_widths(sigma, passes)
    nbins = field.values.shape[0]
    out = np.empty_like(field.values)

    def run(lo: int, hi: int) -> None:
        for b in range(lo, hi):
            out[b] = _smooth_layer(field.values[b], widths)

    map_partitions(run, nbins, workers if nbins > 1 else 1)
    return DensityField(field.transform, out)


def write_pgm(layer: np.ndarray, sink: TextIO) -> None:
    """Dump one layer as an ASCII portable graymap for visual inspection."""
    lo = float(layer.min()) if layer.size else 0.0
    hi = float(layer.max()) if layer.size else 0.0
    span = hi - lo
    if span <= 0:
        gray = np.zeros_like(layer, dtype=np.uint8)
    else:
        gray = np.round((layer - lo) / span * 255.0).astype(np.uint8)
    height, width = layer.shape
    sink.write(f"P2\n{width} {height}\n255\n")
    for row in gray:
        sink.write(" ".join(str(int(g)) for g in row))
        sink.write("\n")
