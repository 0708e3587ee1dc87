"""Reading node/edge text files and writing bundled polylines.

Node files carry one ``id x y`` per line; edge files carry
``source target [weight] [bin]``. Fields are separated by whitespace or
commas and lines starting with ``#`` are comments. The polyline export is
line-delimited text with 9 significant digits per coordinate, so a
re-import reproduces the exported decimals exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, TextIO

import numpy as np

from .bundler import BundleResult
from .model import Edge, Graph, Node

__all__ = [
    "GraphFormatError",
    "ParseReport",
    "PolylineRecord",
    "load_graph",
    "export_polylines",
    "read_polylines",
]

_HEADER = "# histobundle polylines v1"


class GraphFormatError(ValueError):
    """Raised for malformed node or edge input."""


@dataclass
class ParseReport:
    """Counters for edges dropped while loading."""

    self_loops_dropped: int = 0
    zero_length_dropped: int = 0

    @property
    def dropped(self) -> int:
        return self.self_loops_dropped + self.zero_length_dropped


def _fields(line: str) -> list[str]:
    return line.replace(",", " ").split()


def load_graph(node_source: Iterable[str], edge_source: Iterable[str],
               drop_self_loops: bool = True,
               report: ParseReport | None = None) -> Graph:
    """Parse node and edge streams into a validated graph.

    Missing edge weights default to 1 and missing bins to 0. Self-loops are
    dropped (or rejected when ``drop_self_loops`` is false) and zero-length
    edges are always dropped; both are counted on ``report``.
    """
    if report is None:
        report = ParseReport()
    nodes: list[Node] = []
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(node_source, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = _fields(line)
        if len(parts) != 3:
            raise GraphFormatError(
                f"node line {lineno}: expected 'id x y', got {line!r}")
        nid = parts[0]
        if nid in seen:
            raise GraphFormatError(
                f"node line {lineno}: duplicate node id {nid!r}")
        try:
            x, y = float(parts[1]), float(parts[2])
        except ValueError:
            raise GraphFormatError(
                f"node line {lineno}: non-numeric coordinate in {line!r}"
            ) from None
        seen[nid] = len(nodes)
        nodes.append(Node(nid, (x, y)))

    edges: list[Edge] = []
    for lineno, raw in enumerate(edge_source, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = _fields(line)
        if len(parts) < 2 or len(parts) > 4:
            raise GraphFormatError(
                f"edge line {lineno}: expected 'source target [weight] "
                f"[bin]', got {line!r}")
        src, dst = parts[0], parts[1]
        for nid in (src, dst):
            if nid not in seen:
                raise GraphFormatError(
                    f"unknown node {nid!r} at line {lineno}")
        try:
            weight = float(parts[2]) if len(parts) > 2 else 1.0
            bin_ = int(parts[3]) if len(parts) > 3 else 0
        except ValueError:
            raise GraphFormatError(
                f"edge line {lineno}: non-numeric weight or bin in {line!r}"
            ) from None
        if weight < 0:
            raise GraphFormatError(
                f"edge line {lineno}: negative weight {weight}")
        if bin_ < 0:
            raise GraphFormatError(f"edge line {lineno}: negative bin {bin_}")
        if src == dst:
            if not drop_self_loops:
                raise GraphFormatError(
                    f"edge line {lineno}: self-loop on node {src!r}")
            report.self_loops_dropped += 1
            continue
        if nodes[seen[src]].position == nodes[seen[dst]].position:
            report.zero_length_dropped += 1
            continue
        edges.append(Edge(src, dst, weight, bin_))
    return Graph(nodes, edges)


@dataclass
class PolylineRecord:
    """One parsed line of a polyline export."""

    edge_index: int
    bin: int
    weight: float
    points: np.ndarray


def export_polylines(result: BundleResult, sink: TextIO) -> None:
    """Write one record per edge: index, bin, weight, and sample points."""
    graph = result.graph
    sink.write(_HEADER + "\n")
    sink.write(f"# edges {len(result.sampled_edges)}\n")
    for se in result.sampled_edges:
        e = se.edge_index
        coords = " ".join(f"{c:.9g}" for p in se.points for c in p)
        sink.write(f"{e} {graph.bins[e]} {graph.weights[e]:.9g} "
                   f"{len(se)} {coords}\n")


def read_polylines(source: Iterable[str]) -> list[PolylineRecord]:
    """Parse a polyline export back into records."""
    records = []
    for lineno, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        try:
            edge_index = int(parts[0])
            bin_ = int(parts[1])
            weight = float(parts[2])
            n = int(parts[3])
            coords = np.array(parts[4:], dtype=np.float64)
        except (ValueError, IndexError):
            raise GraphFormatError(
                f"polyline line {lineno}: malformed record") from None
        if coords.size != 2 * n:
            raise GraphFormatError(
                f"polyline line {lineno}: expected {2 * n} coordinates, "
                f"got {coords.size}")
        records.append(PolylineRecord(edge_index, bin_, weight,
                                      coords.reshape(n, 2)))
    return records
