"""Directed-graph containers, batching, and JSON-lines I/O.

Graphs are immutable after construction: edge and feature arrays are frozen,
so instances can be shared freely across threads and cached preprocessing
stays valid.

File format (one graph per line):

    {"n": int, "edges": [[src, dst], ...], "x": [[float, ...], ...],
     "y": int | float | [int, ...] (optional), "id": str (optional),
     "node_ids": [str, ...] (optional)}

An optional ``"e"`` key (per-edge features) is accepted and ignored; the
model does not consume edge features. External string node ids, when given,
are kept as a sidecar table and never used for indexing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class GraphFormatError(ValueError):
    """Raised for malformed or inconsistent graph files."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DiGraph:
    """A directed graph with node features and an optional label.

    ``y`` is either a per-node integer label array of length ``num_nodes``,
    a graph-level scalar (int class or float target), or None.
    """

    num_nodes: int
    edges: np.ndarray  # (m, 2) int64 (src, dst); asymmetric adjacency
    node_features: np.ndarray  # (n, f) float64
    y: np.ndarray | int | float | None = None
    graph_id: str | None = None
    node_ids: tuple[str, ...] | None = None

    def __post_init__(self):
        n = self.num_nodes
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        x = np.asarray(self.node_features, dtype=np.float64)
        if n < 0:
            raise GraphFormatError("num_nodes must be non-negative")
        if edges.size and (edges.min() < 0 or edges.max() >= n):
            raise GraphFormatError(f"edge endpoint out of range [0, {n})")
        if edges.shape[0] != len({(int(u), int(v)) for u, v in edges}):
            raise GraphFormatError("duplicate (src, dst) edge pairs")
        if x.ndim != 2 or x.shape[0] != n:
            raise GraphFormatError(
                f"node_features must be (num_nodes, f); got {x.shape} for n={n}"
            )
        y = self.y
        if isinstance(y, (list, np.ndarray)):
            y = np.asarray(y)
            if y.shape[0] != n:
                raise GraphFormatError("node label count != num_nodes")
            object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "edges", _frozen(edges))
        object.__setattr__(self, "node_features", _frozen(x))

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def feature_dim(self) -> int:
        return int(self.node_features.shape[1])

    def out_adjacency(self) -> list[np.ndarray]:
        """Out-neighbour index arrays, one per node."""
        return _adjacency(self.edges[:, 0], self.edges[:, 1], self.num_nodes)

    def in_adjacency(self) -> list[np.ndarray]:
        """In-neighbour (predecessor) index arrays, one per node."""
        return _adjacency(self.edges[:, 1], self.edges[:, 0], self.num_nodes)


def _adjacency(keys: np.ndarray, values: np.ndarray, n: int) -> list[np.ndarray]:
    order = np.argsort(keys, kind="stable")
    keys, values = keys[order], values[order]
    starts = np.searchsorted(keys, np.arange(n + 1))
    return [values[starts[i] : starts[i + 1]] for i in range(n)]


def reverse_graph(g: DiGraph) -> DiGraph:
    """Return the graph with every edge direction inverted; node data kept."""
    return DiGraph(
        num_nodes=g.num_nodes,
        edges=g.edges[:, ::-1].copy(),
        node_features=g.node_features,
        y=g.y,
        graph_id=g.graph_id,
        node_ids=g.node_ids,
    )


@dataclass(frozen=True)
class GraphBatch:
    """Several graphs concatenated into one node/edge index space."""

    num_graphs: int
    num_nodes: int
    edges: np.ndarray  # (M, 2) shifted into the concatenated index space
    node_features: np.ndarray  # (N, f)
    batch_index: np.ndarray  # (N,) graph ordinal per node, non-decreasing
    offsets: np.ndarray  # (num_graphs,) node-index offset per graph
    node_counts: np.ndarray  # (num_graphs,)
    ys: tuple = ()
    graph_ids: tuple = ()

    def __post_init__(self):
        for name in ("edges", "node_features", "batch_index", "offsets", "node_counts"):
            object.__setattr__(self, name, _frozen(np.asarray(getattr(self, name))))
        if np.any(np.diff(self.batch_index) < 0):
            raise GraphFormatError("batch_index must be non-decreasing")
        if self.edges.size:
            same = self.batch_index[self.edges[:, 0]] == self.batch_index[self.edges[:, 1]]
            if not np.all(same):
                raise GraphFormatError("edge crosses two graphs in a batch")

    def node_labels(self) -> np.ndarray:
        """Concatenated per-node labels (requires node-labelled graphs)."""
        return np.concatenate([np.asarray(y) for y in self.ys])

    def graph_labels(self) -> np.ndarray:
        """Stacked graph-level labels (requires graph-labelled graphs)."""
        return np.asarray(self.ys)


def batch_graphs(gs: list[DiGraph]) -> GraphBatch:
    """Concatenate graphs; node indices are shifted by per-graph offsets."""
    if not gs:
        raise ValueError("batch_graphs: empty graph list")
    f = gs[0].feature_dim
    if any(g.feature_dim != f for g in gs):
        raise GraphFormatError("batch_graphs: non-uniform feature dimension")
    counts = np.array([g.num_nodes for g in gs], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])
    edges = [g.edges + off for g, off in zip(gs, offsets) if g.num_edges]
    return GraphBatch(
        num_graphs=len(gs),
        num_nodes=int(counts.sum()),
        edges=np.concatenate(edges) if edges else np.zeros((0, 2), dtype=np.int64),
        node_features=np.concatenate([g.node_features for g in gs]),
        batch_index=np.repeat(np.arange(len(gs)), counts),
        offsets=offsets,
        node_counts=counts,
        ys=tuple(g.y for g in gs),
        graph_ids=tuple(g.graph_id for g in gs),
    )


def unbatch_graphs(b: GraphBatch) -> list[DiGraph]:
    """Invert :func:`batch_graphs`."""
    out = []
    for i in range(b.num_graphs):
        lo = b.offsets[i]
        hi = lo + b.node_counts[i]
        mask = (b.edges[:, 0] >= lo) & (b.edges[:, 0] < hi) if b.edges.size else np.zeros(0, bool)
        out.append(
            DiGraph(
                num_nodes=int(b.node_counts[i]),
                edges=(b.edges[mask] - lo) if b.edges.size else np.zeros((0, 2), np.int64),
                node_features=b.node_features[lo:hi].copy(),
                y=b.ys[i] if b.ys else None,
                graph_id=b.graph_ids[i] if b.graph_ids else None,
            )
        )
    return out


def _graph_from_record(rec: dict, lineno: int) -> DiGraph:
    try:
        n = int(rec["n"])
        edges = np.asarray(rec.get("edges", []), dtype=np.int64).reshape(-1, 2)
        x = np.asarray(rec["x"], dtype=np.float64)
        y = rec.get("y")
        if isinstance(y, list):
            y = np.asarray(y)
        node_ids = rec.get("node_ids")
        return DiGraph(
            num_nodes=n,
            edges=edges,
            node_features=x,
            y=y,
            graph_id=rec.get("id"),
            node_ids=tuple(node_ids) if node_ids else None,
        )
    except (KeyError, TypeError, ValueError, GraphFormatError) as e:
        raise GraphFormatError(f"line {lineno}: {e}") from e


def load_graphs(path: str | Path) -> list[DiGraph]:
    """Load a JSON-lines graph file; fails on the first malformed record."""
    out: list[DiGraph] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise GraphFormatError(f"line {lineno}: invalid JSON ({e})") from e
            out.append(_graph_from_record(rec, lineno))
    if out:
        f = out[0].feature_dim
        for lineno, g in enumerate(out, start=1):
            if g.feature_dim != f:
                raise GraphFormatError(
                    f"line {lineno}: feature dimension {g.feature_dim} != {f}"
                )
    return out


def save_graphs(gs: list[DiGraph], path: str | Path) -> None:
    """Write graphs as JSON lines; `load_graphs(save_graphs(gs))` is identity."""
    with open(path, "w") as fh:
        for g in gs:
            rec: dict = {
                "n": g.num_nodes,
                "edges": g.edges.tolist(),
                "x": g.node_features.tolist(),
            }
            if g.y is not None:
                rec["y"] = g.y.tolist() if isinstance(g.y, np.ndarray) else g.y
            if g.graph_id is not None:
                rec["id"] = g.graph_id
            if g.node_ids is not None:
                rec["node_ids"] = list(g.node_ids)
            fh.write(json.dumps(rec) + "\n")
