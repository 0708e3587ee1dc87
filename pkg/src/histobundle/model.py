"""Core domain types: graphs, grid transforms, density fields, configuration.

Distances, bandwidths and sampling steps are expressed in grid-cell units;
the :class:`GridTransform` owns the conversion to and from world coordinates
so that parameters keep their meaning across graphs of any world scale.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Node",
    "Edge",
    "Graph",
    "SampledEdge",
    "GridTransform",
    "DensityField",
    "BundleConfig",
    "make_transform",
    "interaction_matrix",
]


@dataclass(frozen=True)
class Node:
    """A graph node with a fixed 2D position in world units."""

    id: str
    position: tuple[float, float]


@dataclass(frozen=True)
class Edge:
    """A weighted edge between two node ids, assigned to a density bin."""

    source: str
    target: str
    weight: float = 1.0
    bin: int = 0


class Graph:
    """Immutable, array-backed graph.

    Node positions and edge endpoint indices are stored as numpy arrays so
    the bundling pipeline can operate on them without per-object overhead.
    ``Node``/``Edge`` records are materialized on demand.
    """

    __slots__ = ("node_ids", "positions", "sources", "targets", "weights",
                 "bins", "bin_count", "_index")

    def __init__(self, nodes: Iterable[Node], edges: Iterable[Edge]):
        nodes = list(nodes)
        ids = [n.id for n in nodes]
        index: dict[str, int] = {}
        for i, nid in enumerate(ids):
            if nid in index:
                raise ValueError(f"duplicate node id {nid!r}")
            index[nid] = i
        positions = np.array([n.position for n in nodes], dtype=np.float64)
        positions = positions.reshape(len(nodes), 2)
        if positions.size and not np.isfinite(positions).all():
            raise ValueError("node positions must be finite")

        edges = list(edges)
        sources = np.empty(len(edges), dtype=np.int64)
        targets = np.empty(len(edges), dtype=np.int64)
        weights = np.empty(len(edges), dtype=np.float64)
        bins = np.empty(len(edges), dtype=np.int64)
        for i, e in enumerate(edges):
            try:
                sources[i] = index[e.source]
            except KeyError:
                raise ValueError(f"unknown node {e.source!r} in edge {i}") from None
            try:
                targets[i] = index[e.target]
            except KeyError:
                raise ValueError(f"unknown node {e.target!r} in edge {i}") from None
            weights[i] = e.weight
            bins[i] = e.bin
        self._finish_init(ids, index, positions, sources, targets, weights, bins)

    @classmethod
    def from_arrays(cls, positions, sources, targets, weights=None, bins=None,
                    node_ids: Sequence[str] | None = None) -> "Graph":
        """Build a graph directly from arrays, skipping per-edge records."""
        positions = np.ascontiguousarray(positions, dtype=np.float64)
        n = positions.shape[0]
        if node_ids is None:
            node_ids = [str(i) for i in range(n)]
        else:
            node_ids = list(node_ids)
            if len(node_ids) != n:
                raise ValueError("node_ids length does not match positions")
        index = {nid: i for i, nid in enumerate(node_ids)}
        if len(index) != n:
            raise ValueError("duplicate node id")
        if positions.size and not np.isfinite(positions).all():
            raise ValueError("node positions must be finite")
        sources = np.ascontiguousarray(sources, dtype=np.int64)
        targets = np.ascontiguousarray(targets, dtype=np.int64)
        m = sources.shape[0]
        if weights is None:
            weights = np.ones(m, dtype=np.float64)
        else:
            weights = np.ascontiguousarray(weights, dtype=np.float64)
        if bins is None:
            bins = np.zeros(m, dtype=np.int64)
        else:
            bins = np.ascontiguousarray(bins, dtype=np.int64)
        obj = cls.__new__(cls)
        obj._finish_init(node_ids, index, positions, sources, targets, weights, bins)
        return obj

    def _finish_init(self, ids, index, positions, sources, targets, weights, bins):
        m = sources.shape[0]
        if targets.shape[0] != m or weights.shape[0] != m or bins.shape[0] != m:
            raise ValueError("edge arrays must have equal length")
        n = positions.shape[0]
        if m:
            if sources.min() < 0 or sources.max() >= n:
                raise ValueError("edge source index out of range")
            if targets.min() < 0 or targets.max() >= n:
                raise ValueError("edge target index out of range")
            if (sources == targets).any():
                bad = int(np.argmax(sources == targets))
                raise ValueError(f"self-loop at edge {bad}")
            if (weights < 0).any():
                raise ValueError("edge weights must be nonnegative")
            if bins.min() < 0:
                raise ValueError("edge bins must be nonnegative")
        self.node_ids = list(ids)
        self._index = index
        self.positions = positions
        self.sources = sources
        self.targets = targets
        self.weights = weights
        self.bins = bins
        self.bin_count = int(bins.max()) + 1 if m else 1

    @property
    def n_nodes(self) -> int:
        return self.positions.shape[0]

    @property
    def n_edges(self) -> int:
        return self.sources.shape[0]

    def node_index(self, node_id: str) -> int:
        return self._index[node_id]

    def node(self, i: int) -> Node:
        return Node(self.node_ids[i], (self.positions[i, 0], self.positions[i, 1]))

    def edge(self, i: int) -> Edge:
        return Edge(self.node_ids[self.sources[i]], self.node_ids[self.targets[i]],
                    float(self.weights[i]), int(self.bins[i]))

    @property
    def nodes(self) -> list[Node]:
        return [self.node(i) for i in range(self.n_nodes)]

    @property
    def edges(self) -> list[Edge]:
        return [self.edge(i) for i in range(self.n_edges)]

    def with_bins(self, bins: np.ndarray) -> "Graph":
        """Copy of this graph with a new per-edge bin assignment."""
        return Graph.from_arrays(self.positions, self.sources, self.targets,
                                 self.weights, bins, self.node_ids)

    def __repr__(self) -> str:
        return (f"Graph(nodes={self.n_nodes}, edges={self.n_edges}, "
                f"bins={self.bin_count})")


@dataclass
class SampledEdge:
    """A polyline of world-coordinate sample points for one edge.

    The first and last points always equal the source and target node
    positions; only interior points are moved by the pipeline.
    """

    edge_index: int
    points: np.ndarray  # (n, 2) float64, n >= 2

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class GridTransform:
    """Affine map between world coordinates and a U x V histogram grid.

    ``origin`` is the world point of grid cell (0, 0); one grid cell spans
    ``cell_size`` world units in both axes. ``padding`` records the margin,
    in cells, kept between the node bounding box and the grid boundary.
    """

    origin: tuple[float, float]
    cell_size: float
    width: int   # U, cells along x
    height: int  # V, cells along y
    padding: float = 0.0

    def world_to_grid(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=np.float64)
        return (p - np.asarray(self.origin)) / self.cell_size

    def grid_to_world(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=np.float64)
        return p * self.cell_size + np.asarray(self.origin)

    @property
    def shape(self) -> tuple[int, int]:
        """Grid array shape as (V, U)."""
        return (self.height, self.width)

    def world_bounds(self) -> tuple[float, float, float, float]:
        """(x0, y0, width, height) of the full grid extent in world units."""
        return (self.origin[0], self.origin[1],
                self.width * self.cell_size, self.height * self.cell_size)


def make_transform(nodes, grid_size: int = 800, padding_cells: float = 0.0) -> GridTransform:
    """Fit a grid transform around the node bounding box.

    The dominant dimension of the grid equals ``grid_size``; the other is
    derived from the aspect ratio of the padded bounding box. Degenerate
    boxes (zero extent on an axis) expand that axis to ``2*padding + 1``
    cells centered on the data.
    """
    if isinstance(nodes, Graph):
        positions = nodes.positions
    else:
        positions = np.asarray(nodes, dtype=np.float64).reshape(-1, 2)
    if positions.shape[0] == 0:
        raise ValueError("empty graph")
    pad = float(padding_cells)
    if pad < 0:
        raise ValueError("padding_cells must be nonnegative")
    lo = positions.min(axis=0)
    hi = positions.max(axis=0)
    ex = float(hi[0] - lo[0])
    ey = float(hi[1] - lo[1])
    min_cells = int(math.floor(2.0 * pad)) + 1

    if ex == 0.0 and ey == 0.0:
        cell = 1.0
        width = height = min_cells
    else:
        span = grid_size - 2.0 * pad - 1.0
        if span <= 0:
            raise ValueError(f"grid_size {grid_size} too small for padding {pad}")
        if ex >= ey:
            width = int(grid_size)
            cell = ex / span
            height = int(math.floor(ey / cell + 2.0 * pad)) + 1
        else:
            height = int(grid_size)
            cell = ey / span
            width = int(math.floor(ex / cell + 2.0 * pad)) + 1
    origin = (float(lo[0]) - pad * cell, float(lo[1]) - pad * cell)
    return GridTransform(origin, cell, width, height, pad)


@dataclass
class DensityField:
    """A stack of per-bin 2D edge-density grids.

    ``values`` has shape (B, V, U), single precision, and may hold negative
    entries when bins repel each other.
    """

    transform: GridTransform
    values: np.ndarray

    @property
    def bin_count(self) -> int:
        return self.values.shape[0]

    def layer(self, b: int) -> np.ndarray:
        return self.values[b]


def interaction_matrix(bin_count: int, alpha: float = 0.25) -> np.ndarray:
    """Default bin interaction model: self-attraction 1, cross-bin repulsion.

    Off-diagonal entries are ``-alpha / (B - 1)``; with a single bin the
    matrix is the 1x1 identity.
    """
    if bin_count < 1:
        raise ValueError("bin_count must be >= 1")
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    m = np.eye(bin_count, dtype=np.float32)
    if bin_count > 1:
        off = -alpha / (bin_count - 1)
        m = m + (1.0 - np.eye(bin_count)) * off
    return m.astype(np.float32)


@dataclass
class BundleConfig:
    """Tunable parameters of the bundling pipeline.

    All lengths (``sigma``, ``h_max``, ``delta``) are in grid cells.
    ``sigma`` defaults to ``grid_size / 40`` and is the main bundling
    strength knob; ``h_max`` defaults to ``2 * sigma``.
    """

    grid_size: int = 800
    sigma: float | None = None
    h_max: float | None = None
    lambda_: float = 0.9
    iterations: int = 10
    smoothing_passes: int = 3
    alpha: float = 0.25
    delta: float = 3.0
    laplacian_factor: float = 0.5
    laplacian_passes: int = 1
    directed_offset_fraction: float = 0.0
    epsilon: float = 1e-8
    random_seed: int = 0

    def __post_init__(self):
        if self.grid_size < 8:
            raise ValueError("grid_size must be >= 8")
        if self.sigma is None:
            self.sigma = self.grid_size / 40.0
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.h_max is None:
            self.h_max = 2.0 * self.sigma
        if self.h_max <= 0:
            raise ValueError("h_max must be positive")
        if not (0.0 < self.lambda_ <= 1.0):
            raise ValueError("lambda_ must be in (0, 1]")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.smoothing_passes < 1:
            raise ValueError("smoothing_passes must be >= 1")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if not (0.0 < self.laplacian_factor <= 1.0):
            raise ValueError("laplacian_factor must be in (0, 1]")
        if self.laplacian_passes < 0:
            raise ValueError("laplacian_passes must be >= 0")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.directed_offset_fraction < 0:
            raise ValueError("directed_offset_fraction must be nonnegative")
        if not (self.sigma <= self.h_max <= 3.0 * self.sigma):
            warnings.warn(
                f"h_max={self.h_max} outside the usual [sigma, 3*sigma] range "
                f"for sigma={self.sigma}", stacklevel=2)

    @property
    def padding_cells(self) -> int:
        """Grid margin so smoothing and advection never reach the boundary."""
        return int(math.ceil(self.h_max)) + 1
