"""Command-line front end: load, bin, bundle, render, benchmark.

The reported bundling time covers only the iteration loop (histogram,
smoothing, advection, resampling, Laplacian smoothing); reading, binning
and rendering are timed separately.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from .binning import CRITERIA, assign_bins
from .bundler import BundleResult, bundle
from .io import GraphFormatError, export_polylines, load_graph
from .model import BundleConfig, Graph, interaction_matrix
from .render import ColorScheme, RenderOptions, render_png, render_svg

__all__ = ["RunSpec", "run", "bench", "random_graph", "main"]

_SCHEME_BY_KIND = {"single": "nominal", "modal": "modal-hue",
                   "ordinal": "sequential", "nominal": "nominal"}
_SCHEME_FLAG = {"sequential": "sequential", "hue": "modal-hue",
                "nominal": "nominal", "flow": "flow-blue-red"}


@dataclass
class RunSpec:
    """Everything one CLI invocation needs."""

    nodes: str
    edges: str
    criterion: str = "none"
    bins: str = "auto"
    grid_size: int = 800
    sigma: float | None = None
    h_max: float | None = None
    lambda_: float = 0.9
    iterations: int = 10
    delta: float = 3.0
    alpha: float = 0.25
    offset: float | None = None
    workers: int = 4
    seed: int = 0
    svg: str | None = None
    png: str | None = None
    png_size: tuple[int, int] | None = None
    polylines: str | None = None
    metrics: str | None = None
    scheme: str = "auto"
    edge_alpha: float | None = None
    width_min: float = 0.6
    width_max: float = 4.0
    log_widths: bool = False


def _build_config(spec: RunSpec) -> BundleConfig:
    offset = spec.offset
    if offset is None:
        # flow-direction criteria get the sideways offset by default
        offset = 0.002 if spec.criterion in ("orientation", "od") else 0.0
    return BundleConfig(
        grid_size=spec.grid_size,
        sigma=spec.sigma,
        h_max=spec.h_max,
        lambda_=spec.lambda_,
        iterations=spec.iterations,
        delta=spec.delta,
        alpha=spec.alpha,
        directed_offset_fraction=offset,
        random_seed=spec.seed)


def _write_metrics(result: BundleResult, sink) -> None:
    sink.write("iteration,bandwidth,moved_points,mean_displacement,"
               "used_cells,seconds\n")
    for m in result.metrics:
        sink.write(f"{m.iteration},{m.bandwidth:.9g},{m.moved_points},"
                   f"{m.mean_displacement:.9g},{m.used_cells},"
                   f"{m.seconds:.6f}\n")
    moved = sum(m.moved_points for m in result.metrics)
    last_used = result.metrics[-1].used_cells if result.metrics else 0
    sink.write(f"total,,{moved},,{last_used},"
               f"{result.bundling_seconds:.6f}\n")


def run(spec: RunSpec) -> int:
    """Execute load -> bin -> bundle -> export/render for one RunSpec."""
    t0 = time.perf_counter()
    with open(spec.nodes, encoding="utf-8") as nf, \
            open(spec.edges, encoding="utf-8") as ef:
        graph = load_graph(nf, ef)
    t_read = time.perf_counter() - t0

    t0 = time.perf_counter()
    bins_arg: int | str = spec.bins if spec.bins == "auto" else int(spec.bins)
    if spec.criterion == "none":
        bins_arg = 1
    assignment, bin_count, kind = assign_bins(
        graph, spec.criterion, bins_arg, restarts=100, seed=spec.seed)
    t_bin = time.perf_counter() - t0

    config = _build_config(spec)
    matrix = interaction_matrix(bin_count, config.alpha)
    result = bundle(graph, config, bins=assignment, matrix=matrix,
                    workers=spec.workers)
    # rendering reads bins off the graph
    result.graph = graph.with_bins(assignment)

    t0 = time.perf_counter()
    if spec.polylines:
        with open(spec.polylines, "w", encoding="utf-8") as sink:
            export_polylines(result, sink)
    scheme_name = (_SCHEME_BY_KIND[kind] if spec.scheme == "auto"
                   else _SCHEME_FLAG[spec.scheme])
    opts = RenderOptions(width_min=spec.width_min, width_max=spec.width_max,
                         alpha=spec.edge_alpha, log_widths=spec.log_widths)
    if spec.svg:
        with open(spec.svg, "w", encoding="utf-8") as sink:
            sink.write(render_svg(result, ColorScheme(scheme_name), opts))
    if spec.png:
        image = render_png(result, ColorScheme(scheme_name), opts,
                           size=spec.png_size)
        image.save(spec.png)
    if spec.metrics:
        with open(spec.metrics, "w", encoding="utf-8") as sink:
            _write_metrics(result, sink)
    t_write = time.perf_counter() - t0

    samples = sum(len(se) for se in result.sampled_edges)
    print(f"bundled {graph.n_edges} edges ({samples} samples, "
          f"{bin_count} bins) in {result.bundling_seconds:.2f}s; "
          f"read {t_read:.2f}s, bin {t_bin:.2f}s, write {t_write:.2f}s")
    return 0


def random_graph(n_edges: int, samples_per_edge: float = 24.0,
                 delta: float = 3.0, grid_size: int = 800,
                 padding_cells: int = 41, seed: int = 0,
                 world: float = 1000.0) -> Graph:
    """Random benchmark graph with a controllable mean samples-per-edge.

    Sources are uniform in a square; targets sit at a uniform random angle
    and a length drawn so edges average the requested number of sample
    points at the given grid resolution.
    """
    rng = np.random.default_rng(seed)
    cell = world / (grid_size - 2 * padding_cells - 1)
    mean_len = max(samples_per_edge - 1.5, 0.7) * delta * cell
    src = rng.uniform(0.0, world, size=(n_edges, 2))
    angle = rng.uniform(0.0, 2.0 * math.pi, size=n_edges)
    length = rng.uniform(0.5, 1.5, size=n_edges) * mean_len
    dst = src + np.stack([np.cos(angle), np.sin(angle)], axis=1) * length[:, None]
    np.clip(dst, 0.0, world, out=dst)
    positions = np.concatenate([src, dst], axis=0)
    sources = np.arange(n_edges, dtype=np.int64)
    targets = np.arange(n_edges, 2 * n_edges, dtype=np.int64)
    return Graph.from_arrays(positions, sources, targets)


def bench(sizes: list[int], bins: list[int], seed: int = 0,
          samples_per_edge: float = 24.0, iterations: int = 10,
          workers: int = 1, sink=None) -> list[tuple[int, int, int, float]]:
    """Scalability harness: bundle random graphs, report bundling seconds.

    Returns (edges, samples, bins, seconds) rows, one per (size, B) pair,
    and writes them as CSV to ``sink`` when given.
    """
    rows = []
    if sink is not None:
        sink.write("edges,samples,bins,seconds\n")
    for n_edges in sizes:
        config = BundleConfig(iterations=iterations, random_seed=seed)
        graph = random_graph(n_edges, samples_per_edge, config.delta,
                             config.grid_size, config.padding_cells, seed)
        for b in bins:
            bin_assign = np.arange(n_edges, dtype=np.int64) % b
            matrix = interaction_matrix(b, config.alpha)
            result = bundle(graph, config, bins=bin_assign, matrix=matrix,
                            workers=workers)
            samples = sum(len(se) for se in result.sampled_edges)
            row = (n_edges, samples, b, result.bundling_seconds)
            rows.append(row)
            if sink is not None:
                sink.write(f"{row[0]},{row[1]},{row[2]},{row[3]:.6f}\n")
                sink.flush()
    return rows


def _parse_int_list(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="histobundle",
        description="Bundle graph edges toward high-density regions and "
                    "render the result.")
    p.add_argument("--nodes", help="node file: one 'id x y' per line")
    p.add_argument("--edges", help="edge file: 'source target [weight] [bin]'")
    p.add_argument("--criterion", choices=CRITERIA, default="none",
                   help="edge grouping criterion (default none)")
    p.add_argument("--bins", default="auto",
                   help="bin count, or 'auto' for Davies-Bouldin selection")
    p.add_argument("--alpha", type=float, default=0.25,
                   help="cross-bin repulsion strength")
    p.add_argument("--sigma", type=float, default=None,
                   help="density smoothing radius in cells "
                        "(default grid/40)")
    p.add_argument("--hmax", type=float, default=None,
                   help="initial advection bandwidth in cells "
                        "(default 2*sigma)")
    p.add_argument("--lambda", dest="lambda_", type=float, default=0.9,
                   help="bandwidth decay factor per iteration")
    p.add_argument("--iterations", type=int, default=10)
    p.add_argument("--delta", type=float, default=3.0,
                   help="sampling step in cells")
    p.add_argument("--grid", type=int, default=800,
                   help="dominant histogram dimension")
    p.add_argument("--offset", type=float, default=None,
                   help="directed sideways offset as a fraction of the "
                        "drawing size")
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--svg", help="write an SVG drawing here")
    p.add_argument("--png", help="write a raster drawing here")
    p.add_argument("--png-size", default=None,
                   help="raster dimensions as WxH (default grid size)")
    p.add_argument("--polylines", help="write bundled polylines here")
    p.add_argument("--metrics", help="write per-iteration metrics CSV here")
    p.add_argument("--scheme", choices=("auto",) + tuple(_SCHEME_FLAG),
                   default="auto")
    p.add_argument("--edge-alpha", type=float, default=None,
                   help="stroke opacity (default by edge count)")
    p.add_argument("--width-min", type=float, default=0.6)
    p.add_argument("--width-max", type=float, default=4.0)
    p.add_argument("--log-width", action="store_true",
                   help="logarithmic density-to-width mapping")
    p.add_argument("--bench", default=None, metavar="SIZES",
                   help="run the scalability benchmark on these "
                        "comma-separated edge counts instead of bundling "
                        "input files")
    p.add_argument("--bench-bins", default="1", metavar="BINS",
                   help="comma-separated bin counts for --bench")
    p.add_argument("--bench-samples-per-edge", type=float, default=24.0)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.bench is not None:
            sizes = _parse_int_list(args.bench)
            bins = _parse_int_list(args.bench_bins)
            sink = (open(args.metrics, "w", encoding="utf-8")
                    if args.metrics else sys.stdout)
            try:
                bench(sizes, bins, seed=args.seed,
                      samples_per_edge=args.bench_samples_per_edge,
                      iterations=args.iterations, workers=args.workers,
                      sink=sink)
            finally:
                if sink is not sys.stdout:
                    sink.close()
            return 0
        if not args.nodes or not args.edges:
            print("error: --nodes and --edges are required "
                  "(or use --bench)", file=sys.stderr)
            return 2
        png_size = None
        if args.png_size:
            w, _, h = args.png_size.partition("x")
            png_size = (int(w), int(h))
        spec = RunSpec(
            nodes=args.nodes, edges=args.edges, criterion=args.criterion,
            bins=args.bins, grid_size=args.grid, sigma=args.sigma,
            h_max=args.hmax, lambda_=args.lambda_,
            iterations=args.iterations, delta=args.delta, alpha=args.alpha,
            offset=args.offset, workers=args.workers, seed=args.seed,
            svg=args.svg, png=args.png, png_size=png_size,
            polylines=args.polylines, metrics=args.metrics,
            scheme=args.scheme, edge_alpha=args.edge_alpha,
            width_min=args.width_min, width_max=args.width_max,
            log_widths=args.log_width)
        return run(spec)
    except (OSError, GraphFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
