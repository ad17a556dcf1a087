import numpy as np
import pytest

from dgssm.graphs import DiGraph
from dgssm.rng import RngStream


def make_random_digraph(seed: int, max_nodes: int = 25, feat_dim: int = 3) -> DiGraph:
    stream = RngStream(seed)
    n = int(stream.integers(2, max_nodes + 1))
    p = float(stream.uniform(0.05, 0.3))
    mask = stream.uniform(size=(n, n)) < p
    np.fill_diagonal(mask, False)
    return DiGraph(n, np.argwhere(mask), stream.normal(size=(n, feat_dim)))


@pytest.fixture
def chain3() -> DiGraph:
    return DiGraph(3, np.array([[0, 1], [1, 2]]), np.arange(6, dtype=float).reshape(3, 2))
