"""The iterative bundling pipeline.

Each iteration rebuilds the multi-layer density histogram from the current
sample points, smooths it, advects every interior point up the density
gradient of its own bin's layer with a density-monotone adaptive step, and
relaxes the polylines with Laplacian smoothing. The advection bandwidth
decays geometrically, h_i = lambda^i * h_max, which makes the process
settle.

Points are held in grid-cell coordinates while iterating; results are
converted back to world units, with edge endpoints pinned bit-exactly to
their node positions.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from ._parallel import map_partitions
from .model import (BundleConfig, DensityField, Graph, GridTransform,
                    SampledEdge, interaction_matrix, make_transform)
from .raster import _accumulate_packed, smooth_gaussian_approx

__all__ = [
    "MIN_STEP",
    "IterationMetrics",
    "BundleResult",
    "initial_sample",
    "apply_directed_offset",
    "gradient_at",
    "density_at",
    "advect_point",
    "laplacian_smooth",
    "resample",
    "used_cell_mask",
    "used_cell_count",
    "bundle",
]

# advection steps below a quarter cell are visually negligible; the halving
# loop gives up there and leaves the point in place
MIN_STEP = 0.25


@dataclass
class IterationMetrics:
    """Per-iteration instrumentation record."""

    iteration: int
    bandwidth: float
    moved_points: int
    mean_displacement: float
    used_cells: int
    seconds: float


@dataclass
class BundleResult:
    """Output of a full bundling run."""

    graph: Graph
    sampled_edges: list[SampledEdge]
    density: DensityField
    metrics: list[IterationMetrics]
    bundling_seconds: float


# ---------------------------------------------------------------------------
# packed polyline helpers (grid coordinates)

def _sample_packed(graph: Graph, transform: GridTransform, delta: float):
    src = np.ascontiguousarray(transform.world_to_grid(
        graph.positions[graph.sources]))
    dst = np.ascontiguousarray(transform.world_to_grid(
        graph.positions[graph.targets]))
    seg = np.linalg.norm(dst - src, axis=1)
    counts = np.maximum(np.ceil(seg / delta).astype(np.int64), 1) + 1
    starts = np.zeros(graph.n_edges + 1, dtype=np.int64)
    np.cumsum(counts, out=starts[1:])
    pts = np.empty((int(starts[-1]), 2), dtype=np.float64)
    if graph.n_edges:
        _kernels.fill_samples(src, dst, starts, pts)
    return pts, starts


def _offset_packed(pts: np.ndarray, starts: np.ndarray, amount_cells: float):
    firsts = pts[starts[:-1]]
    lasts = pts[starts[1:] - 1]
    d = lasts - firsts
    length = np.linalg.norm(d, axis=1)
    normal = np.zeros_like(d)
    ok = length > 0
    normal[ok, 0] = -d[ok, 1] / length[ok]
    normal[ok, 1] = d[ok, 0] / length[ok]
    counts = np.diff(starts)
    disp = np.repeat(normal * amount_cells, counts, axis=0)
    keep = np.ones(pts.shape[0], dtype=bool)
    keep[starts[:-1]] = False
    keep[starts[1:] - 1] = False
    pts[keep] += disp[keep]


def _resample_packed(pts: np.ndarray, starts: np.ndarray, delta: float,
                     workers: int):
    n_edges = starts.size - 1
    counts = np.empty(n_edges, dtype=np.int64)
    map_partitions(
        lambda lo, hi: _kernels.resample_count(pts, starts, delta, counts,
                                               lo, hi),
        n_edges, workers)
    new_starts = np.zeros(n_edges + 1, dtype=np.int64)
    np.cumsum(counts, out=new_starts[1:])
    out = np.empty((int(new_starts[-1]), 2), dtype=np.float64)
    map_partitions(
        lambda lo, hi: _kernels.resample_emit(pts, starts, delta, new_starts,
                                              out, lo, hi),
        n_edges, workers)
    return out, new_starts


def _advect_packed(pts: np.ndarray, starts: np.ndarray, edge_layer: np.ndarray,
                   rho: np.ndarray, h: float, epsilon: float,
                   fixed_step: bool, workers: int):
    n_edges = starts.size - 1
    results = map_partitions(
        lambda lo, hi: _kernels.advect(pts, starts, edge_layer, rho, h,
                                       epsilon, MIN_STEP, fixed_step, lo, hi),
        n_edges, workers)
    interior = sum(r[0] for r in results)
    moved = sum(r[1] for r in results)
    disp = sum(r[2] for r in results)
    return interior, moved, disp


def _laplacian_packed(pts: np.ndarray, starts: np.ndarray, factor: float,
                      passes: int, workers: int):
    if passes < 1:
        return
    scratch = np.empty_like(pts)
    map_partitions(
        lambda lo, hi: _kernels.laplacian(pts, starts, factor, passes,
                                          scratch, lo, hi),
        starts.size - 1, workers)


def _materialize(graph: Graph, transform: GridTransform, pts: np.ndarray,
                 starts: np.ndarray) -> list[SampledEdge]:
    world = transform.grid_to_world(pts)
    src = graph.positions[graph.sources]
    dst = graph.positions[graph.targets]
    sampled = []
    for e in range(graph.n_edges):
        p = world[starts[e]:starts[e + 1]]
        p[0] = src[e]
        p[-1] = dst[e]
        sampled.append(SampledEdge(e, p))
    return sampled


# ---------------------------------------------------------------------------
# public per-operation surface

def initial_sample(graph: Graph, transform: GridTransform,
                   delta: float) -> list[SampledEdge]:
    """Sample every edge into ceil(len/delta)+1 equally spaced points.

    ``delta`` is in grid cells; the returned points are world coordinates
    with endpoints exactly equal to the node positions.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    pts, starts = _sample_packed(graph, transform, delta)
    return _materialize(graph, transform, pts, starts)


def apply_directed_offset(sampled: Sequence[SampledEdge], fraction: float,
                          transform: GridTransform) -> None:
    """Shift interior points sideways, to the left of the edge direction.

    The offset is ``fraction`` of the dominant grid dimension, so edges
    running in opposite directions between the same nodes separate to
    opposite sides before the first iteration.
    """
    if fraction < 0:
        raise ValueError("fraction must be nonnegative")
    amount = fraction * max(transform.width, transform.height) * transform.cell_size
    for se in sampled:
        p = se.points
        d = p[-1] - p[0]
        length = math.hypot(d[0], d[1])
        if length == 0 or p.shape[0] <= 2:
            continue
        p[1:-1, 0] += amount * (-d[1] / length)
        p[1:-1, 1] += amount * (d[0] / length)


def density_at(field: DensityField, layer: int, p) -> float:
    """Bilinear density sample at a continuous grid point."""
    return float(_kernels.bilinear_value(field.values[layer],
                                         float(p[0]), float(p[1])))


def gradient_at(field: DensityField, layer: int, p) -> np.ndarray:
    """Density gradient at a continuous grid point.

    Central differences at the four surrounding cells, bilinearly
    interpolated; exact for linear and quadratic fields.
    """
    gx, gy = _kernels.gradient_xy(field.values[layer], float(p[0]),
                                  float(p[1]))
    return np.array([gx, gy])


def advect_point(p, field: DensityField, layer: int, h: float,
                 epsilon: float = 1e-8, min_step: float = MIN_STEP,
                 fixed_step: bool = False) -> np.ndarray:
    """Move one grid point up the density gradient of its layer.

    Tries steps h, h/2, h/4, ... and returns the first candidate whose
    bilinear density is not below the density at ``p``; gives up (returning
    ``p``) once the step falls under ``min_step``. Candidates are clamped
    to the grid interior.
    """
    rho = field.values[layer]
    nv, nu = rho.shape
    xlo = ylo = _kernels.INTERIOR_MARGIN
    xhi = nu - 1 - _kernels.INTERIOR_MARGIN
    yhi = nv - 1 - _kernels.INTERIOR_MARGIN
    x = float(p[0])
    y = float(p[1])
    gx, gy = _kernels.gradient_xy(rho, x, y)
    gn = math.sqrt(gx * gx + gy * gy)
    if gn < epsilon:
        gn = epsilon
    dx = gx / gn
    dy = gy / gn
    if fixed_step:
        return np.array([min(max(x + h * dx, xlo), xhi),
                         min(max(y + h * dy, ylo), yhi)])
    r0 = _kernels.bilinear_value(rho, x, y)
    m = h
    while m >= min_step:
        nx = min(max(x + m * dx, xlo), xhi)
        ny = min(max(y + m * dy, ylo), yhi)
        if _kernels.bilinear_value(rho, nx, ny) >= r0:
            return np.array([nx, ny])
        m *= 0.5
    return np.array([x, y])


def laplacian_smooth(polyline: SampledEdge, factor: float = 0.5,
                     passes: int = 1) -> None:
    """Pull interior points toward their neighbors' midpoint, in place.

    Jacobi update: all points of a pass read the previous pass's
    coordinates. Endpoints never move.
    """
    if not (0.0 < factor <= 1.0):
        raise ValueError("factor must be in (0, 1]")
    pts = np.ascontiguousarray(polyline.points, dtype=np.float64)
    starts = np.array([0, pts.shape[0]], dtype=np.int64)
    _kernels.laplacian(pts, starts, factor, passes, np.empty_like(pts), 0, 1)
    polyline.points[...] = pts


def resample(polyline: SampledEdge, delta: float) -> None:
    """Re-space a polyline so consecutive gaps fall in [0.5, 1.5] * delta.

    Points closer than half the step to the previously kept point merge
    into their successor; gaps wider than 1.5 steps are split at midpoints.
    Endpoints are never removed; the final gap may stay shorter. ``delta``
    is in the units of the polyline's coordinates.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    pts = np.ascontiguousarray(polyline.points, dtype=np.float64)
    starts = np.array([0, pts.shape[0]], dtype=np.int64)
    counts = np.empty(1, dtype=np.int64)
    _kernels.resample_count(pts, starts, delta, counts, 0, 1)
    new_starts = np.array([0, int(counts[0])], dtype=np.int64)
    out = np.empty((int(counts[0]), 2), dtype=np.float64)
    _kernels.resample_emit(pts, starts, delta, new_starts, out, 0, 1)
    polyline.points = out


def used_cell_mask(field: DensityField, layer: int,
                   rel_threshold: float = 0.01) -> np.ndarray:
    """Cells of one layer whose density exceeds rel_threshold * layer max."""
    rho = field.values[layer]
    peak = float(rho.max(initial=0.0))
    if peak <= 0:
        return np.zeros_like(rho, dtype=bool)
    return rho > rel_threshold * peak


def used_cell_count(field: DensityField, rel_threshold: float = 0.01) -> int:
    """Total used cells over all layers; a proxy for drawn ink/sharpness."""
    return int(sum(used_cell_mask(field, b, rel_threshold).sum()
                   for b in range(field.bin_count)))


# ---------------------------------------------------------------------------
# full pipeline

def bundle(graph: Graph, config: BundleConfig | None = None, *,
           bins: np.ndarray | None = None, matrix: np.ndarray | None = None,
           workers: int = 1,
           on_iteration: Callable[[IterationMetrics], None] | None = None,
           _fixed_step: bool = False) -> BundleResult:
    """Run the full bundling pipeline on a graph.

    ``bins`` overrides the per-edge bin assignment stored on the graph;
    ``matrix`` overrides the default attraction/repulsion model built from
    ``config.alpha``. The run is deterministic and its polylines are
    bit-identical for any worker count. ``_fixed_step`` switches advection
    to the non-adaptive full-bandwidth step; it exists for comparison tests
    only.
    """
    cfg = config if config is not None else BundleConfig()
    bins_arr = graph.bins if bins is None else np.ascontiguousarray(
        bins, dtype=np.int64)
    if bins_arr.shape[0] != graph.n_edges:
        raise ValueError("bins length does not match edge count")
    nbins = int(bins_arr.max()) + 1 if graph.n_edges else 1
    if matrix is None:
        matrix = interaction_matrix(nbins, cfg.alpha)
    matrix = np.asarray(matrix, dtype=np.float32)
    if matrix.shape[0] < nbins:
        raise ValueError(f"interaction matrix smaller than bin count {nbins}")
    nbins = matrix.shape[0]

    transform = make_transform(graph.positions, cfg.grid_size,
                               cfg.padding_cells)
    pts, starts = _sample_packed(graph, transform, cfg.delta)
    if cfg.directed_offset_fraction > 0:
        _offset_packed(pts, starts,
                       cfg.directed_offset_fraction
                       * max(transform.width, transform.height))
    layer_w = np.ascontiguousarray(
        graph.weights.astype(np.float32)[:, None] * matrix.T[bins_arr])

    metrics: list[IterationMetrics] = []
    field = DensityField(transform,
                         np.zeros((nbins,) + transform.shape, np.float32))
    for i in range(cfg.iterations):
        t0 = time.perf_counter()
        if i > 0:
            pts, starts = _resample_packed(pts, starts, cfg.delta, workers)
        raw = _accumulate_packed(pts, starts, layer_w, transform.shape,
                                 workers)
        field = smooth_gaussian_approx(DensityField(transform, raw),
                                       cfg.sigma, cfg.smoothing_passes,
                                       workers)
        h_i = cfg.lambda_ ** i * cfg.h_max
        interior, moved, disp = _advect_packed(pts, starts, bins_arr,
                                               field.values, h_i,
                                               cfg.epsilon, _fixed_step,
                                               workers)
        _laplacian_packed(pts, starts, cfg.laplacian_factor,
                          cfg.laplacian_passes, workers)
        record = IterationMetrics(
            iteration=i,
            bandwidth=h_i,
            moved_points=moved,
            mean_displacement=disp / interior if interior else 0.0,
            used_cells=used_cell_count(field),
            seconds=time.perf_counter() - t0)
        metrics.append(record)
        if on_iteration is not None:
            on_iteration(record)

    sampled = _materialize(graph, transform, pts, starts)
    return BundleResult(graph, sampled, field, metrics,
                        sum(m.seconds for m in metrics))
