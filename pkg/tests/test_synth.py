import json
import math

import numpy as np
import pytest

from dgssm.algos import _reverse_bfs, depth_plus, tarjan_scc
from dgssm.stats import predecessor_counts
from dgssm.synth import SyntheticTaskSpec, gen_synthetic


def _all_graphs(splits):
    return splits["train"] + splits["val"] + splits["test"]


def test_spec_validation():
    with pytest.raises(ValueError, match="task"):
        SyntheticTaskSpec(task="nope")
    with pytest.raises(ValueError, match="splits"):
        SyntheticTaskSpec(task="depth-regress", splits=(0.5, 0.5, 0.5))
    with pytest.raises(ValueError, match="infeasible"):
        SyntheticTaskSpec(task="reachability-classify", min_nodes=5, max_nodes=8)
    with pytest.raises(ValueError, match="density"):
        SyntheticTaskSpec(task="depth-regress", edge_density=1.5)


def test_zero_cycle_rate_yields_acyclic_graphs():
    spec = SyntheticTaskSpec(task="depth-regress", num_graphs=40, cycle_rate=0.0, seed=1)
    for g in _all_graphs(gen_synthetic(spec)):
        part = tarjan_scc(g)
        assert part.num_components == g.num_nodes  # all singleton SCCs
        assert not any(u == v for u, v in g.edges)


def test_same_seed_byte_identical_files(tmp_path):
    spec = SyntheticTaskSpec(task="reachability-classify", num_graphs=20, seed=9)
    gen_synthetic(spec, tmp_path / "a")
    gen_synthetic(spec, tmp_path / "b")
    for name in ("train.jsonl", "val.jsonl", "test.jsonl", "task_meta.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_different_seed_differs(tmp_path):
    a = SyntheticTaskSpec(task="depth-regress", num_graphs=10, seed=1)
    b = SyntheticTaskSpec(task="depth-regress", num_graphs=10, seed=2)
    gen_synthetic(a, tmp_path / "a")
    gen_synthetic(b, tmp_path / "b")
    assert (tmp_path / "a" / "train.jsonl").read_bytes() != (tmp_path / "b" / "train.jsonl").read_bytes()


def test_depth_labels_recompute_exactly():
    spec = SyntheticTaskSpec(task="depth-regress", num_graphs=25, cycle_rate=0.3, seed=3)
    for g in _all_graphs(gen_synthetic(spec)):
        assert np.array_equal(np.asarray(g.y), depth_plus(g))


def test_ancestor_labels_recompute_exactly():
    spec = SyntheticTaskSpec(task="ancestor-count-regress", num_graphs=15, seed=4)
    for g in _all_graphs(gen_synthetic(spec)):
        want = float(np.mean(predecessor_counts(g, math.inf) + 1))
        assert g.y == pytest.approx(want, abs=1e-12)


def test_reachability_labels_recompute_exactly():
    spec = SyntheticTaskSpec(task="reachability-classify", num_graphs=25, cycle_rate=0.3, seed=5)
    for g in _all_graphs(gen_synthetic(spec)):
        flags = np.flatnonzero(g.node_features[:, 1] == 1.0)
        assert len(flags) == 1  # exactly one marked sink
        sink = int(flags[0])
        dist = _reverse_bfs(g.in_adjacency(), sink, math.inf)
        want = np.zeros(g.num_nodes, dtype=np.int64)
        for u, s in dist.items():
            if s <= spec.k_true:
                want[u] = 1
        assert np.array_equal(np.asarray(g.y), want)


def test_reachability_classes_roughly_balanced():
    spec = SyntheticTaskSpec(
        task="reachability-classify", num_graphs=60, min_nodes=15, max_nodes=21, seed=6
    )
    ys = np.concatenate([np.asarray(g.y) for g in _all_graphs(gen_synthetic(spec))])
    assert 0.35 <= ys.mean() <= 0.65


def test_cycle_rate_produces_cycles():
    spec = SyntheticTaskSpec(task="depth-regress", num_graphs=60, cycle_rate=1.0, seed=7)
    graphs = _all_graphs(gen_synthetic(spec))
    cyclic = sum(1 for g in graphs if tarjan_scc(g).num_components < g.num_nodes)
    assert cyclic >= 0.8 * len(graphs)


def test_split_sizes_and_meta(tmp_path):
    spec = SyntheticTaskSpec(task="depth-regress", num_graphs=40, seed=8, splits=(0.5, 0.25, 0.25))
    splits = gen_synthetic(spec, tmp_path)
    assert len(splits["train"]) == 20
    assert len(splits["val"]) == 10
    assert len(splits["test"]) == 10
    meta = json.loads((tmp_path / "task_meta.json").read_text())
    assert meta["model_task"] == "node-regress"
    assert meta["spec"]["num_graphs"] == 40


def test_node_counts_within_range():
    spec = SyntheticTaskSpec(task="depth-regress", num_graphs=30, min_nodes=10, max_nodes=18, seed=9)
    for g in _all_graphs(gen_synthetic(spec)):
        assert 10 <= g.num_nodes <= 18
