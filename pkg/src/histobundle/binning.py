"""Edge grouping: orientation slices and K-means with Davies-Bouldin selection.

Bins drive which density layer attracts an edge. They can come from a fixed
angular discretization, from K-means clustering of simple per-edge features
(endpoints or length, plain Euclidean distance, no column scaling), or from
a precomputed column in the input file.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Graph

__all__ = [
    "CRITERIA",
    "Clustering",
    "edge_features",
    "bin_by_orientation",
    "kmeans",
    "davies_bouldin",
    "select_bins",
    "assign_bins",
]

# criterion name -> (feature columns, palette kind)
CRITERIA = ("none", "orientation", "origin", "destination", "od", "length", "file")

_MAX_LLOYD_ITER = 100


@dataclass
class Clustering:
    """Result of one K-means run: the best restart by inertia."""

    k: int
    assignment: np.ndarray  # (n,) int64
    centroids: np.ndarray   # (k, d) float64
    inertia: float


def edge_features(graph: Graph, criterion: str) -> np.ndarray:
    """Per-edge feature rows for a clustering criterion, in world units."""
    src = graph.positions[graph.sources]
    dst = graph.positions[graph.targets]
    if criterion == "od":
        return np.hstack([src, dst])
    if criterion == "origin":
        return src.copy()
    if criterion == "destination":
        return dst.copy()
    if criterion == "length":
        return np.linalg.norm(dst - src, axis=1)[:, None]
    raise ValueError(f"criterion {criterion!r} has no feature representation")


def bin_by_orientation(graph: Graph, slices: int = 4) -> np.ndarray:
    """Assign each edge the angular slice nearest to its direction.

    Slice centers sit at multiples of 360/slices degrees starting at 0; the
    bins are modal (cyclic), which the renderer maps onto the hue circle.
    """
    if slices < 2:
        raise ValueError("slices must be >= 2")
    d = graph.positions[graph.targets] - graph.positions[graph.sources]
    theta = np.degrees(np.arctan2(d[:, 1], d[:, 0]))
    width = 360.0 / slices
    return (np.rint(theta / width).astype(np.int64)) % slices


def _init_centroids(unique_rows: np.ndarray, k: int, restarts: int,
                    rng: np.random.Generator) -> np.ndarray:
    picks = np.empty((restarts, k), dtype=np.int64)
    for r in range(restarts):
        picks[r] = rng.choice(unique_rows.shape[0], size=k, replace=False)
    return unique_rows[picks]


def kmeans(features: np.ndarray, k: int, restarts: int = 100,
           seed: int | np.random.SeedSequence = 0) -> Clustering:
    """Best-of-restarts Lloyd's K-means on Euclidean distance.

    Every restart starts from k distinct rows sampled from the seeded
    generator and iterates to an assignment fixpoint (or 100 iterations).
    The winner is the restart with minimal inertia, ties broken by restart
    index, so the result is deterministic for a given seed regardless of
    how restarts are scheduled.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise ValueError("features must be a 2D matrix")
    n = features.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    if n < k:
        raise ValueError("k exceeds distinct points")
    unique_rows = np.unique(features, axis=0)
    if unique_rows.shape[0] < k:
        raise ValueError("k exceeds distinct points")

    rng = np.random.default_rng(seed)
    cent = _init_centroids(unique_rows, k, restarts, rng)  # (R, k, d)
    assign = np.full((restarts, n), -1, dtype=np.int64)
    active = np.ones(restarts, dtype=bool)
    # batch restarts so the (r, n, k, d) distance tensor stays small
    chunk = max(1, int(3e7 / max(1, n * k * features.shape[1])))

    for _ in range(_MAX_LLOYD_ITER):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        for c0 in range(0, idx.size, chunk):
            sub = idx[c0:c0 + chunk]
            diff = features[None, :, None, :] - cent[sub][:, None, :, :]
            d2 = np.einsum("rnkd,rnkd->rnk", diff, diff)
            new_assign = np.argmin(d2, axis=2)
            changed = (new_assign != assign[sub]).any(axis=1)
            assign[sub] = new_assign
            active[sub] = changed
            for r in sub[changed]:
                cent[r] = _update_centroids(features, assign[r], cent[r])

    inertia = np.empty(restarts, dtype=np.float64)
    for r in range(restarts):
        delta = features - cent[r][assign[r]]
        inertia[r] = np.einsum("nd,nd->", delta, delta)
    best = int(np.argmin(inertia))
    return Clustering(k, assign[best].copy(), cent[best].copy(),
                      float(inertia[best]))


def _update_centroids(features: np.ndarray, assign: np.ndarray,
                      cent: np.ndarray) -> np.ndarray:
    k, d = cent.shape
    counts = np.bincount(assign, minlength=k).astype(np.float64)
    sums = np.zeros((k, d), dtype=np.float64)
    np.add.at(sums, assign, features)
    out = cent.copy()
    nonempty = counts > 0
    out[nonempty] = sums[nonempty] / counts[nonempty, None]
    empty = np.flatnonzero(~nonempty)
    if empty.size:
        # re-seed emptied clusters with the points farthest from their
        # own centroids, one distinct point per cluster
        dist = np.linalg.norm(features - out[assign], axis=1)
        for c in empty:
            far = int(np.argmax(dist))
            out[c] = features[far]
            dist[far] = -np.inf
    return out


def davies_bouldin(features: np.ndarray, clustering: Clustering) -> float:
    """Cluster validity index: mean over clusters of the worst
    (scatter_i + scatter_j) / centroid_distance_ij ratio. Lower is better."""
    features = np.asarray(features, dtype=np.float64)
    k = clustering.k
    if k < 2:
        raise ValueError("davies_bouldin needs k >= 2")
    counts = np.bincount(clustering.assignment, minlength=k)
    if (counts == 0).any():
        raise ValueError("degenerate clustering: empty cluster")
    dist = np.linalg.norm(features - clustering.centroids[clustering.assignment],
                          axis=1)
    scatter = np.zeros(k, dtype=np.float64)
    np.add.at(scatter, clustering.assignment, dist)
    scatter /= counts
    cd = np.linalg.norm(clustering.centroids[:, None, :]
                        - clustering.centroids[None, :, :], axis=2)
    with np.errstate(divide="ignore"):
        ratio = (scatter[:, None] + scatter[None, :]) / cd
    np.fill_diagonal(ratio, -np.inf)
    return float(np.mean(ratio.max(axis=1)))


def select_bins(features: np.ndarray, kmin: int = 4, kmax: int = 16,
                restarts: int = 100, seed: int = 0) -> tuple[np.ndarray, int]:
    """Pick the bin count in [kmin, kmax] minimizing the Davies-Bouldin index.

    Runs kmeans for every candidate k; ties break toward smaller k. Returns
    (per-edge assignment, chosen k).
    """
    if kmin < 2:
        raise ValueError("kmin must be >= 2")
    if kmax < kmin:
        raise ValueError("kmax must be >= kmin")
    children = np.random.SeedSequence(seed).spawn(kmax - kmin + 1)
    best_db = np.inf
    best: tuple[np.ndarray, int] | None = None
    for k, child in zip(range(kmin, kmax + 1), children):
        clustering = kmeans(features, k, restarts=restarts, seed=child)
        db = davies_bouldin(features, clustering)
        if db < best_db:
            best_db = db
            best = (clustering.assignment, k)
    assert best is not None
    return best


def _relabel_ascending(assignment: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    order = np.argsort(centroids[:, 0], kind="stable")
    remap = np.empty(order.size, dtype=np.int64)
    remap[order] = np.arange(order.size)
    return remap[assignment]


def assign_bins(graph: Graph, criterion: str, bins: int | str = "auto",
                slices: int = 4, restarts: int = 100,
                seed: int = 0) -> tuple[np.ndarray, int, str]:
    """Compute per-edge bins for a named criterion.

    ``bins`` is an integer bin count or "auto" (Davies-Bouldin selection
    over [4, 16] for clustering criteria). Returns (assignment, bin count,
    palette kind) where the kind is one of "single", "modal", "ordinal",
    "nominal" for the renderer.
    """
    if criterion not in CRITERIA:
        raise ValueError(f"unknown criterion {criterion!r}; "
                         f"expected one of {', '.join(CRITERIA)}")
    n = graph.n_edges
    if criterion == "none":
        return np.zeros(n, dtype=np.int64), 1, "single"
    if criterion == "file":
        return graph.bins.copy(), graph.bin_count, "nominal"
    if criterion == "orientation":
        s = slices if bins == "auto" else int(bins)
        return bin_by_orientation(graph, s), s, "modal"

    features = edge_features(graph, criterion)
    if bins == "auto":
        assignment, k = select_bins(features, restarts=restarts, seed=seed)
        centroids = np.stack([features[assignment == c].mean(axis=0)
                              for c in range(k)])
    else:
        clustering = kmeans(features, int(bins), restarts=restarts, seed=seed)
        assignment, k = clustering.assignment, clustering.k
        centroids = clustering.centroids
    if criterion == "length":
        # ordinal bins: relabel so bin index grows with edge length
        assignment = _relabel_ascending(assignment, centroids)
        return assignment, k, "ordinal"
    return assignment, k, "nominal"
