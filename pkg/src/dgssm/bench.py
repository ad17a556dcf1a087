"""Per-stage timing across hop bounds.

Times preprocessing, kernel-table construction, forward, and backward on a
fixed set of graphs while the hop bound K sweeps a range. The scan's work is
proportional to the total number of hop pairs, so forward time should grow
at most linearly in that count (plus a K-independent floor from the encoder,
fusion, and feed-forward blocks).
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .algos import compute_artifacts
from .graphs import DiGraph
from .model import ModelConfig, init_weights, model_forward, model_loss
from .rng import RngStream
from .ssm import kernel_table
from .model import _ssm_view
from .train import Prepared, collate


@dataclass
class BenchRecord:
    k: int
    total_pairs: int
    preprocess_s: float
    kernel_s: float
    forward_s: float
    backward_s: float

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "total_pairs": self.total_pairs,
            "preprocess_s": self.preprocess_s,
            "kernel_s": self.kernel_s,
            "forward_s": self.forward_s,
            "backward_s": self.backward_s,
        }


def chain_like_graphs(
    num_graphs: int = 8, nodes: int = 120, seed: int = 0
) -> list[DiGraph]:
    """Long chains with sparse skip edges: hop-pair counts grow with K."""
    stream = RngStream(seed)
    gs = []
    for i in range(num_graphs):
        edges = [(j, j + 1) for j in range(nodes - 1)]
        for j in range(0, nodes - 3, 7):
            edges.append((j, j + 3))
        gs.append(
            DiGraph(
                nodes,
                np.array(edges),
                stream.normal(size=(nodes, 3)),
                y=stream.normal(size=nodes),  # labels so backward can be timed
                graph_id=f"b{i}",
            )
        )
    return gs


def _time(fn, repeats: int = 3) -> float:
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return float(best)


def run_bench(
    ks: list[int] | None = None,
    num_graphs: int = 8,
    nodes: int = 120,
    hidden: int = 32,
    repeats: int = 3,
    seed: int = 0,
) -> list[BenchRecord]:
    ks = list(ks) if ks else list(range(1, 10))
    graphs = chain_like_graphs(num_graphs, nodes, seed)
    records = []
    for k in ks:
        cfg = ModelConfig(
            in_dim=3, task="node-regress", hidden=hidden, heads=4, num_layers=1,
            se_layers=1, ssm_state=8, k_hops=k, dropout=0.0, bidirectional=False,
        )
        params = init_weights(cfg, RngStream(seed + 1))
        t0 = time.perf_counter()
        prepared = [Prepared(g, compute_artifacts(g, k), None) for g in graphs]
        t_pre = time.perf_counter() - t0
        batch, fwd, rev = collate(prepared)
        ssm = _ssm_view(params, "layers.0.fwd.ssm")
        t_kernel = _time(lambda: kernel_table(ssm, k), repeats)

        def fwd_once():
            return model_forward(batch, fwd, rev, cfg, params, train=False)

        t_forward = _time(fwd_once, repeats)

        def bwd_once():
            params.zero_grad()
            loss = model_loss(
                model_forward(batch, fwd, rev, cfg, params, train=False), batch, cfg
            )
            loss.backward()

        t_backward = _time(bwd_once, repeats) - t_forward
        records.append(
            BenchRecord(
                k=k,
                total_pairs=fwd.num_pairs,
                preprocess_s=t_pre,
                kernel_s=t_kernel,
                forward_s=t_forward,
                backward_s=max(t_backward, 0.0),
            )
        )
    return records


def scaling_summary(records: list[BenchRecord]) -> dict:
    """Forward-time growth relative to linear-in-pairs growth.

    ``max_superlinearity`` is max over K of
    (time_K / time_ref) / (pairs_K / pairs_ref) with K=min as reference;
    values <= 1 mean sublinear growth (fixed overhead dominates).
    """
    base = records[0]
    worst = 0.0
    for r in records[1:]:
        time_ratio = r.forward_s / base.forward_s
        pair_ratio = r.total_pairs / base.total_pairs
        worst = max(worst, time_ratio / pair_ratio)
    return {
        "reference_k": base.k,
        "max_superlinearity": worst,
        "records": [r.to_dict() for r in records],
    }
