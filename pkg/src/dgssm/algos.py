"""Pure directed-graph algorithms.

Strongly connected components (iterative Tarjan), condensation, depth over
arbitrary digraphs via the condensation DAG, PageRank power iteration with
dangling-mass redistribution, bounded-hop predecessor extraction by reverse
BFS, and the layered ego sequentializer. All functions are pure and safe to
parallelize across graphs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graphs import DiGraph, GraphBatch

INF_HOPS = math.inf  # accepted wherever a hop bound is "unbounded"


@dataclass(frozen=True)
class SccPartition:
    """Partition of nodes into strongly connected components."""

    component_id: np.ndarray  # (n,) component index per node
    components: list[np.ndarray]  # member node arrays, each sorted

    @property
    def num_components(self) -> int:
        return len(self.components)


@dataclass(frozen=True)
class CondensationDag:
    """DAG of SCC supernodes; edges are deduplicated inter-component pairs."""

    num_supernodes: int
    edges: np.ndarray  # (k, 2) int64, no duplicates, no self-loops


def tarjan_scc(g: DiGraph) -> SccPartition:
    """Tarjan's strongly-connected-components algorithm, iteratively.

    Runs in O(n + m); two nodes share a component iff mutually reachable.
    """
    n = g.num_nodes
    adj = g.out_adjacency()
    index = np.full(n, -1, dtype=np.int64)
    lowlink = np.zeros(n, dtype=np.int64)
    on_stack = np.zeros(n, dtype=bool)
    comp_id = np.full(n, -1, dtype=np.int64)
    stack: list[int] = []
    components: list[np.ndarray] = []
    counter = 0

    for root in range(n):
        if index[root] != -1:
            continue
        # Explicit work stack of (node, iterator position) frames.
        work = [(root, 0)]
        while work:
            v, pi = work.pop()
            if pi == 0:
                index[v] = lowlink[v] = counter
                counter += 1
                stack.append(v)
                on_stack[v] = True
            recurse = False
            neighbors = adj[v]
            for j in range(pi, len(neighbors)):
                w = int(neighbors[j])
                if index[w] == -1:
                    work.append((v, j + 1))
                    work.append((w, 0))
                    recurse = True
                    break
                if on_stack[w]:
                    lowlink[v] = min(lowlink[v], index[w])
            if recurse:
                continue
            if lowlink[v] == index[v]:
                members = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp_id[w] = len(components)
                    members.append(w)
                    if w == v:
                        break
                components.append(np.array(sorted(members), dtype=np.int64))
            if work:
                parent = work[-1][0]
                lowlink[parent] = min(lowlink[parent], lowlink[v])
    return SccPartition(component_id=comp_id, components=components)


def condense(g: DiGraph, p: SccPartition) -> CondensationDag:
    """Contract each SCC to a supernode; intra-component edges are dropped."""
    cid = p.component_id
    if g.num_edges:
        src = cid[g.edges[:, 0]]
        dst = cid[g.edges[:, 1]]
        keep = src != dst
        pairs = np.unique(np.stack([src[keep], dst[keep]], axis=1), axis=0)
    else:
        pairs = np.zeros((0, 2), dtype=np.int64)
    return CondensationDag(num_supernodes=p.num_components, edges=pairs)


def dag_depth(dag: CondensationDag) -> np.ndarray:
    """Depth on a DAG: 0 for sources, else 1 + max over predecessors.

    Computed by Kahn's topological order; raises on a cycle.
    """
    k = dag.num_supernodes
    indeg = np.zeros(k, dtype=np.int64)
    out: list[list[int]] = [[] for _ in range(k)]
    for u, v in dag.edges:
        out[int(u)].append(int(v))
        indeg[int(v)] += 1
    depth = np.zeros(k, dtype=np.int64)
    frontier = [i for i in range(k) if indeg[i] == 0]
    seen = 0
    while frontier:
        u = frontier.pop()
        seen += 1
        for v in out[u]:
            depth[v] = max(depth[v], depth[u] + 1)
            indeg[v] -= 1
            if indeg[v] == 0:
                frontier.append(v)
    if seen != k:
        raise ValueError("dag_depth: input graph contains a cycle")
    return depth


def depth_plus(g: DiGraph) -> np.ndarray:
    """Per-node depth for arbitrary digraphs.

    Contract SCCs, take DAG depth on the condensation, and broadcast each
    supernode's depth to its members; every member of an SCC gets the same
    depth, and a DAG reduces to the plain depth recurrence.
    """
    part = tarjan_scc(g)
    dag = condense(g, part)
    return dag_depth(dag)[part.component_id]


def pagerank(
    g: DiGraph,
    damping: float = 0.85,
    tol: float = 1e-10,
    max_iters: int = 100,
) -> np.ndarray:
    """Power-iteration PageRank with uniform dangling-mass redistribution.

    Fixed point of  PR(u) = (1-a)/n + a * sum_{v -> u} PR(v) / outdeg(v),
    with the rank mass of out-degree-0 nodes spread uniformly each sweep so
    scores always sum to 1. Iteration stops when the L1 change drops below
    ``tol`` or after ``max_iters`` sweeps.
    """
    if not (0.0 < damping < 1.0):
        raise ValueError(f"pagerank: damping must be in (0, 1), got {damping}")
    n = g.num_nodes
    if n == 0:
        return np.zeros(0)
    src, dst = g.edges[:, 0], g.edges[:, 1]
    outdeg = np.bincount(src, minlength=n).astype(np.float64)
    dangling = outdeg == 0
    x = np.full(n, 1.0 / n)
    base = (1.0 - damping) / n
    for _ in range(max_iters):
        contrib = np.zeros(n)
        if len(src):
            per_edge = x[src] / outdeg[src]
            contrib = np.bincount(dst, weights=per_edge, minlength=n)
        spill = x[dangling].sum() / n
        x_new = base + damping * (contrib + spill)
        if np.abs(x_new - x).sum() < tol:
            x = x_new
            break
        x = x_new
    return x


def _reverse_bfs(preds: list[np.ndarray], center: int, max_hops: float) -> dict[int, int]:
    """Hop distances over in-edges from ``center``; includes center at 0."""
    dist = {center: 0}
    frontier = [center]
    hops = 0
    while frontier and hops < max_hops:
        hops += 1
        nxt = []
        for v in frontier:
            for u in preds[v]:
                u = int(u)
                if u not in dist:
                    dist[u] = hops
                    nxt.append(u)
        frontier = nxt
    return dist


def k_hop_predecessors(
    g: DiGraph, k: int | float
) -> tuple[np.ndarray, np.ndarray]:
    """All (predecessor, center) pairs within ``k`` directed hops.

    For each center v, a reverse BFS over in-edges emits (u, v) with the
    shortest-path distance SPD(u, v) for every u at distance <= k, including
    the self pair (v, v) at distance 0. Pass ``math.inf`` to exhaust
    reachability. Pair order is fixed: center ascending, then distance
    ascending, then predecessor ascending, so artifacts are reproducible.
    """
    if not (k == INF_HOPS or (isinstance(k, (int, np.integer)) and k >= 0)):
        raise ValueError(f"k_hop_predecessors: bad hop bound {k!r}")
    preds = g.in_adjacency()
    pairs: list[tuple[int, int]] = []
    spds: list[int] = []
    for v in range(g.num_nodes):
        dist = _reverse_bfs(preds, v, k)
        for u, s in sorted(dist.items(), key=lambda it: (it[1], it[0])):
            pairs.append((u, v))
            spds.append(s)
    return (
        np.asarray(pairs, dtype=np.int64).reshape(-1, 2),
        np.asarray(spds, dtype=np.int64),
    )


def dir_ego2token(g: DiGraph, v: int, k: int) -> list[list[int]]:
    """Layered causal sequence for center ``v``: [L_k, ..., L_1, L_0].

    Layer L_i holds the predecessors at shortest-path distance exactly i;
    L_0 = [v]. Empty layers stay as empty lists; members are sorted for a
    deterministic serialization (aggregation downstream is order-free).
    """
    if not 0 <= v < g.num_nodes:
        raise ValueError(f"dir_ego2token: node {v} out of range")
    dist = _reverse_bfs(g.in_adjacency(), v, k)
    layers: list[list[int]] = [[] for _ in range(k + 1)]
    for u, s in dist.items():
        layers[s].append(u)
    for layer in layers:
        layer.sort()
    return layers[::-1]


@dataclass(frozen=True)
class PreprocessArtifacts:
    """Per-graph derived structure consumed by the model.

    ``k_hop_edge_index`` rows are (predecessor u, center v) with
    ``k_hop_spd`` giving the hop distance per row; self pairs at distance 0
    are always present, so every center owns a non-empty segment.
    """

    depth: np.ndarray  # (n,) int64
    pagerank: np.ndarray  # (n,) float64, sums to 1 per graph
    k_hop_edge_index: np.ndarray  # (E, 2) int64
    k_hop_spd: np.ndarray  # (E,) int64
    k: int

    @property
    def num_pairs(self) -> int:
        return int(self.k_hop_spd.shape[0])


def compute_artifacts(g: DiGraph, k: int, damping: float = 0.85) -> PreprocessArtifacts:
    """Depth, PageRank, and bounded-hop predecessor pairs for one graph."""
    pairs, spd = k_hop_predecessors(g, k)
    return PreprocessArtifacts(
        depth=depth_plus(g),
        pagerank=pagerank(g, damping=damping),
        k_hop_edge_index=pairs,
        k_hop_spd=spd,
        k=int(k),
    )


def batch_artifacts(arts: list[PreprocessArtifacts], batch: GraphBatch) -> PreprocessArtifacts:
    """Concatenate per-graph artifacts into the batch index space."""
    if len(arts) != batch.num_graphs:
        raise ValueError("batch_artifacts: artifact/graph count mismatch")
    ks = {a.k for a in arts}
    if len(ks) != 1:
        raise ValueError(f"batch_artifacts: mixed hop bounds {sorted(ks)}")
    pairs = [a.k_hop_edge_index + off for a, off in zip(arts, batch.offsets)]
    return PreprocessArtifacts(
        depth=np.concatenate([a.depth for a in arts]),
        pagerank=np.concatenate([a.pagerank for a in arts]),
        k_hop_edge_index=np.concatenate(pairs),
        k_hop_spd=np.concatenate([a.k_hop_spd for a in arts]),
        k=ks.pop(),
    )


ARTIFACT_MAGIC = "DGSSM-PRE"
ARTIFACT_VERSION = 1


def save_artifacts(arts: dict[str, PreprocessArtifacts], path: str | Path) -> None:
    """Write artifacts keyed by graph id, as JSON lines behind a magic header."""
    with open(path, "w") as fh:
        header = {"magic": ARTIFACT_MAGIC, "version": ARTIFACT_VERSION}
        fh.write(json.dumps(header) + "\n")
        for gid, a in arts.items():
            rec = {
                "id": gid,
                "k": a.k,
                "depth": a.depth.tolist(),
                "pagerank": a.pagerank.tolist(),
                "pairs": a.k_hop_edge_index.tolist(),
                "spd": a.k_hop_spd.tolist(),
            }
            fh.write(json.dumps(rec) + "\n")


def load_artifacts(path: str | Path) -> dict[str, PreprocessArtifacts]:
    """Read a sidecar written by :func:`save_artifacts`."""
    out: dict[str, PreprocessArtifacts] = {}
    with open(path) as fh:
        header = json.loads(fh.readline())
        if header.get("magic") != ARTIFACT_MAGIC:
            raise ValueError(f"{path}: not an artifact sidecar file")
        if header.get("version") != ARTIFACT_VERSION:
            raise ValueError(f"{path}: unsupported version {header.get('version')}")
        for line in fh:
            rec = json.loads(line)
            out[rec["id"]] = PreprocessArtifacts(
                depth=np.asarray(rec["depth"], dtype=np.int64),
                pagerank=np.asarray(rec["pagerank"], dtype=np.float64),
                k_hop_edge_index=np.asarray(rec["pairs"], dtype=np.int64).reshape(-1, 2),
                k_hop_spd=np.asarray(rec["spd"], dtype=np.int64),
                k=int(rec["k"]),
            )
    return out
