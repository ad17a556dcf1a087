"""The directed-graph SSM layer stack.

Data flow per layer: node features are encoded once (input projection +
depth positional encoding + gated directional GCN layers), then each layer
runs the hop-structured scan: multi-head attention weights over every node's
bounded-hop predecessor set select messages that are first transformed by
the hop-distance-indexed kernel matrix, summed per center, recalibrated by
fusion attention across (node, feature, head) axes, flattened, projected,
and passed through residual / layer-norm / feed-forward blocks. A
bidirectional layer runs an independent second scan on the edge-reversed
graph (its own weights, preprocessing, and PageRank) and merges by
concatenation + projection.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .algos import PreprocessArtifacts
from .autodiff import ParameterSet, Tensor
from .checkpoint import load_arrays, save_arrays
from .graphs import GraphBatch
from .rng import RngStream
from .ssm import SSMKernelTable, SSMParams, kernel_table

TASKS = ("node-classify", "node-regress", "graph-classify", "graph-regress")


@dataclass
class ModelConfig:
    """Hyperparameters for the full stack."""

    in_dim: int
    task: str
    num_classes: int = 0
    hidden: int = 64
    heads: int = 4
    num_layers: int = 2
    se_layers: int = 1  # 0 disables the structural encoder (probe configs)
    ssm_state: int = 8
    dt_min: float = 1e-3
    dt_max: float = 1e-1
    k_hops: int = 4
    dropout: float = 0.1
    bidirectional: bool = False
    use_depth_pe: bool = True
    use_fusion: bool = True

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.hidden % self.heads != 0:
            raise ValueError(f"hidden {self.hidden} not divisible by heads {self.heads}")
        if not (0.0 < self.dt_min <= self.dt_max):
            raise ValueError("need 0 < dt_min <= dt_max")
        if self.k_hops < 0:
            raise ValueError("k_hops must be >= 0")
        if self.task.endswith("classify") and self.num_classes < 2:
            raise ValueError("classification tasks need num_classes >= 2")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")

    @property
    def head_dim(self) -> int:
        return self.hidden // self.heads

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def depth_positional_encoding(depth: np.ndarray, d: int) -> np.ndarray:
    """Sinusoidal encoding of integer depths, width exactly ``d``.

    Column 2i holds sin(depth / 10000^(2i/d)); column 2i+1 the matching cos.
    Odd widths end on a sin column.
    """
    depth = np.asarray(depth, dtype=np.float64).reshape(-1, 1)
    n_pairs = (d + 1) // 2
    freq = 1.0 / (10000.0 ** (2.0 * np.arange(n_pairs) / d))
    angles = depth * freq
    pe = np.zeros((depth.shape[0], d))
    pe[:, 0::2] = np.sin(angles)
    pe[:, 1::2] = np.cos(angles)[:, : d // 2]
    return pe


# -- weight construction ---------------------------------------------------------


def _lin(stream: RngStream, rows: int, cols: int) -> np.ndarray:
    return stream.normal(0.0, 1.0 / np.sqrt(rows), size=(rows, cols))


def _branch2_kernel(heads: int) -> int:
    # Conv along the head/channel axis needs an odd kernel no wider than C.
    return 3 if heads >= 3 else 1


def init_weights(cfg: ModelConfig, stream: RngStream) -> ParameterSet:
    """All trainable tensors, registered under stable dotted names."""
    p = ParameterSet()
    d, dh, h = cfg.hidden, cfg.head_dim, cfg.heads

    def add(name, arr):
        p.add(name, Tensor(arr, requires_grad=True))

    add("encoder.proj.w", _lin(stream, cfg.in_dim, d))
    add("encoder.proj.b", np.zeros(d))
    for i in range(cfg.se_layers):
        for direction in ("in", "out"):
            for j in range(1, 5):
                add(f"encoder.se{i}.{direction}.w{j}", _lin(stream, d, d))
        add(f"encoder.se{i}.ln.g", np.ones(d))
        add(f"encoder.se{i}.ln.b", np.zeros(d))

    directions = ("fwd", "rev") if cfg.bidirectional else ("fwd",)
    for li in range(cfg.num_layers):
        for tag in directions:
            pre = f"layers.{li}.{tag}"
            for name in ("wq", "wk", "wv", "wo"):
                add(f"{pre}.{name}", _lin(stream, d, d))
            add(f"{pre}.ssm.a_log", np.log(np.arange(1, cfg.ssm_state + 1, dtype=np.float64)))
            add(
                f"{pre}.ssm.log_dt",
                stream.uniform(np.log(cfg.dt_min), np.log(cfg.dt_max), size=cfg.ssm_state),
            )
            scale = 1.0 / np.sqrt(cfg.ssm_state)
            add(f"{pre}.ssm.b", stream.normal(0.0, scale, size=(cfg.ssm_state, d)))
            add(f"{pre}.ssm.c", stream.normal(0.0, scale, size=(d, cfg.ssm_state)))
            add(f"{pre}.fusion.nd.w", stream.normal(0.0, 1.0 / np.sqrt(14), size=(1, 2, 7)))
            add(f"{pre}.fusion.nd.b", np.zeros(1))
            k2 = _branch2_kernel(h)
            add(f"{pre}.fusion.nc.w", stream.normal(0.0, 1.0 / np.sqrt(2 * k2), size=(1, 2, k2)))
            add(f"{pre}.fusion.nc.b", np.zeros(1))
            add(f"{pre}.fusion.dc.w", stream.normal(0.0, 1.0 / np.sqrt(18), size=(1, 2, 3, 3)))
            add(f"{pre}.fusion.dc.b", np.zeros(1))
            add(f"{pre}.fusion.pr.w", stream.normal(0.0, 1.0, size=(1,)))
            add(f"{pre}.fusion.pr.b", np.zeros(1))
        if cfg.bidirectional:
            add(f"layers.{li}.bi.w", _lin(stream, 2 * d, d))
        add(f"layers.{li}.ln1.g", np.ones(d))
        add(f"layers.{li}.ln1.b", np.zeros(d))
        add(f"layers.{li}.ffn.w1", _lin(stream, d, 2 * d))
        add(f"layers.{li}.ffn.b1", np.zeros(2 * d))
        add(f"layers.{li}.ffn.w2", _lin(stream, 2 * d, d))
        add(f"layers.{li}.ffn.b2", np.zeros(d))
        add(f"layers.{li}.ln2.g", np.ones(d))
        add(f"layers.{li}.ln2.b", np.zeros(d))

    out_width = cfg.num_classes if cfg.task.endswith("classify") else 1
    if cfg.task.startswith("node"):
        add("head.w1", _lin(stream, d, out_width))
        add("head.b1", np.zeros(out_width))
    else:
        add("head.w1", _lin(stream, d, d))
        add("head.b1", np.zeros(d))
        add("head.w2", _lin(stream, d, out_width))
        add("head.b2", np.zeros(out_width))
    return p


def _ssm_view(params: ParameterSet, prefix: str) -> SSMParams:
    return SSMParams(
        a_log=params[f"{prefix}.a_log"],
        log_dt=params[f"{prefix}.log_dt"],
        B=params[f"{prefix}.b"],
        C=params[f"{prefix}.c"],
    )


# -- building blocks -------------------------------------------------------------


def dir_gated_gcn(
    h: Tensor,
    edges: np.ndarray,
    params: ParameterSet,
    prefix: str,
) -> Tensor:
    """One gated directional graph-convolution layer.

    Both edge directions are aggregated with separate weights:
    center update  h W1 + sum_j gate(v, j) * (h_j W2)  with
    gate = sigmoid(h_v W3 + h_j W4); the two directional results are
    averaged, added to the residual, and layer-normalized.
    """
    n = h.shape[0]

    def one_direction(tag: str, centers: np.ndarray, neighbors: np.ndarray) -> Tensor:
        w = {j: params[f"{prefix}.{tag}.w{j}"] for j in range(1, 5)}
        self_term = ad.matmul(h, w[1])
        if centers.size == 0:
            return self_term
        gate = ad.sigmoid(
            ad.add(
                ad.gather_rows(ad.matmul(h, w[3]), centers),
                ad.gather_rows(ad.matmul(h, w[4]), neighbors),
            )
        )
        msg = ad.mul(gate, ad.gather_rows(ad.matmul(h, w[2]), neighbors))
        return ad.add(self_term, ad.segment_sum(msg, centers, n))

    src = edges[:, 0] if edges.size else np.zeros(0, np.int64)
    dst = edges[:, 1] if edges.size else np.zeros(0, np.int64)
    res_in = one_direction("in", dst, src)  # messages along edge direction
    res_out = one_direction("out", src, dst)  # messages against edge direction
    combined = ad.mul(ad.add(res_in, res_out), 0.5)
    return ad.layer_norm(
        ad.add(h, combined), params[f"{prefix}.ln.g"], params[f"{prefix}.ln.b"]
    )


def encode_inputs(
    x: Tensor,
    depth: np.ndarray,
    edges: np.ndarray,
    cfg: ModelConfig,
    params: ParameterSet,
) -> Tensor:
    """Project raw features to width d, add the depth encoding, then run the
    structural encoder layers."""
    h = ad.add(ad.matmul(x, params["encoder.proj.w"]), params["encoder.proj.b"])
    if cfg.use_depth_pe:
        h = ad.add(h, ad.constant(depth_positional_encoding(depth, cfg.hidden)))
    for i in range(cfg.se_layers):
        h = dir_gated_gcn(h, edges, params, f"encoder.se{i}")
    return h


def digraph_ssm_scan(
    fx: Tensor,
    artifacts: PreprocessArtifacts,
    table: SSMKernelTable,
    wq: Tensor,
    wk: Tensor,
    wv: Tensor,
    wo: Tensor,
    num_heads: int,
) -> tuple[Tensor, Tensor]:
    """Attention-selective scan over bounded-hop predecessor sets.

    Per head c, attention weights are a segment softmax over each center's
    whole predecessor set (self pair included, all hop distances jointly):

        alpha(u, v) ~ exp(<fx_v Wq, fx_u Wk>_c / sqrt(d_head))

    Each message fx_u Wv is transformed by the kernel matrix for its hop
    distance before the weighted sum. Returns the head-stacked tensor
    (n, d_head, heads) plus the flattened n x d form after Wo.
    """
    n, d = fx.shape
    if d % num_heads:
        raise ad.ShapeError(f"scan: width {d} not divisible by {num_heads} heads")
    dh = d // num_heads
    pairs, spd = artifacts.k_hop_edge_index, artifacts.k_hop_spd
    if artifacts.k > table.k:
        raise ValueError(f"artifacts built with k={artifacts.k} > table k={table.k}")
    e = pairs.shape[0]
    u_idx, v_idx = pairs[:, 0], pairs[:, 1]

    q = ad.matmul(fx, wq)
    k = ad.matmul(fx, wk)
    v = ad.matmul(fx, wv)
    q_c = ad.gather_rows(q, v_idx).reshape(e, num_heads, dh)
    k_p = ad.gather_rows(k, u_idx).reshape(e, num_heads, dh)
    scores = ad.mul(ad.sum_(ad.mul(q_c, k_p), axis=2), 1.0 / np.sqrt(dh))  # (E, heads)
    alpha = ad.segment_softmax(scores, v_idx, n)

    # Hop-indexed message transform: group pairs by hop distance, apply that
    # hop's d x d matrix, and restore the original pair order.
    v_p = ad.gather_rows(v, u_idx)  # (E, d)
    order = np.argsort(spd, kind="stable")
    inverse = np.empty_like(order)
    inverse[order] = np.arange(e)
    counts = np.bincount(spd, minlength=table.k + 1)
    v_sorted = ad.gather_rows(v_p, order)
    chunks = []
    start = 0
    for hop in range(table.k + 1):
        c = int(counts[hop])
        if c == 0:
            continue
        rows = ad.gather_rows(v_sorted, np.arange(start, start + c))
        chunks.append(ad.matmul(rows, ad.transpose(table.hop(hop), (1, 0))))
        start += c
    msgs = ad.gather_rows(ad.concat(chunks, axis=0), inverse)  # (E, d)

    weighted = ad.mul(msgs.reshape(e, num_heads, dh), alpha.reshape(e, num_heads, 1))
    y = ad.segment_sum(weighted, v_idx, n)  # (n, heads, dh)
    heads = ad.transpose(y, (0, 2, 1))  # (n, dh, heads)
    flat = ad.matmul(y.reshape(n, d), wo)
    return heads, flat


def flatten_heads(heads: Tensor) -> Tensor:
    """(n, d_head, heads) -> (n, d) with head c occupying columns [c*dh, (c+1)*dh)."""
    n, dh, h = heads.shape
    return ad.transpose(heads, (0, 2, 1)).reshape(n, dh * h)


@dataclass
class FusionWeights:
    nd_w: Tensor
    nd_b: Tensor
    nc_w: Tensor
    nc_b: Tensor
    dc_w: Tensor
    dc_b: Tensor
    pr_w: Tensor
    pr_b: Tensor

    @classmethod
    def view(cls, params: ParameterSet, prefix: str) -> "FusionWeights":
        return cls(
            nd_w=params[f"{prefix}.nd.w"],
            nd_b=params[f"{prefix}.nd.b"],
            nc_w=params[f"{prefix}.nc.w"],
            nc_b=params[f"{prefix}.nc.b"],
            dc_w=params[f"{prefix}.dc.w"],
            dc_b=params[f"{prefix}.dc.b"],
            pr_w=params[f"{prefix}.pr.w"],
            pr_b=params[f"{prefix}.pr.b"],
        )


def _zpool_first(t: Tensor) -> Tensor:
    """Concatenate max and mean over the leading axis as two channels."""
    first, rows, cols = t.shape
    mx = ad.max_(t, axis=0).reshape(rows, 1, cols)
    av = ad.mean(t, axis=0).reshape(rows, 1, cols)
    return ad.concat([mx, av], axis=1)  # (rows, 2, cols)


def digraph_fusion_attention(
    x: Tensor,
    pagerank: np.ndarray,
    batch_index: np.ndarray,
    num_graphs: int,
    w: FusionWeights,
) -> Tensor:
    """Cross-axis recalibration of the head-stacked tensor (N, D_h, C).

    Three branches: (1) compress the head axis, convolve along features to
    gate node-feature interactions; (2) compress the feature axis, convolve
    along heads; (3) weight nodes by a per-graph softmax over a learned
    scalar map of PageRank, pool max+mean per graph, convolve 3x3 over
    (feature, head), and broadcast the gate back to that graph's nodes.
    The output is the mean of the three gated branches; pooling is keyed by
    batch index so graphs in a batch never mix.
    """
    n, dh, c = x.shape
    if pagerank.shape[0] != n or batch_index.shape[0] != n:
        raise ad.ShapeError("fusion: pagerank/batch_index must align with nodes")

    # Branch 1: N-D interaction (head axis compressed, conv along features).
    x_c = ad.transpose(x, (2, 0, 1))  # (C, n, dh)
    gate_nd = ad.sigmoid(ad.conv1d(_zpool_first(x_c), w.nd_w, w.nd_b, padding=3))
    branch1 = ad.transpose(
        ad.mul(x_c, ad.transpose(gate_nd, (1, 0, 2))), (1, 2, 0)
    )

    # Branch 2: N-C interaction (feature axis compressed, conv along heads).
    x_d = ad.transpose(x, (1, 0, 2))  # (dh, n, C)
    k2 = w.nc_w.shape[2]
    gate_nc = ad.sigmoid(ad.conv1d(_zpool_first(x_d), w.nc_w, w.nc_b, padding=(k2 - 1) // 2))
    branch2 = ad.transpose(ad.mul(x_d, ad.transpose(gate_nc, (1, 0, 2))), (1, 0, 2))

    # Branch 3: D-C interaction guided by PageRank, pooled per graph.
    logits = ad.add(ad.mul(ad.constant(pagerank.reshape(-1, 1)), w.pr_w), w.pr_b)
    w_p = ad.segment_softmax(logits, batch_index, num_graphs)  # (n, 1)
    xw = ad.mul(x, w_p.reshape(n, 1, 1))
    gmax = ad.segment_max(xw, batch_index, num_graphs).reshape(num_graphs, 1, dh, c)
    gavg = ad.segment_mean(xw, batch_index, num_graphs).reshape(num_graphs, 1, dh, c)
    pooled = ad.concat([gmax, gavg], axis=1)  # (G, 2, dh, C)
    gate_dc = ad.sigmoid(ad.conv2d(pooled, w.dc_w, w.dc_b, padding=1)).reshape(
        num_graphs, dh, c
    )
    branch3 = ad.mul(x, ad.gather_rows(gate_dc, batch_index))

    return ad.mul(ad.add(ad.add(branch1, branch2), branch3), 1.0 / 3.0)


def dirgraphssm_layer(
    h: Tensor,
    arts_fwd: PreprocessArtifacts,
    arts_rev: PreprocessArtifacts | None,
    batch_index: np.ndarray,
    num_graphs: int,
    cfg: ModelConfig,
    params: ParameterSet,
    layer_index: int,
    train: bool = False,
    stream: RngStream | None = None,
) -> Tensor:
    """One full layer: scan(s) + fusion + projection + residual/norm/FFN."""
    if cfg.bidirectional and arts_rev is None:
        raise ValueError("bidirectional layer requires reverse-graph artifacts")

    def scan_branch(tag: str, arts: PreprocessArtifacts) -> Tensor:
        pre = f"layers.{layer_index}.{tag}"
        table = kernel_table(_ssm_view(params, f"{pre}.ssm"), cfg.k_hops)
        heads, flat = digraph_ssm_scan(
            h, arts, table,
            params[f"{pre}.wq"], params[f"{pre}.wk"],
            params[f"{pre}.wv"], params[f"{pre}.wo"],
            cfg.heads,
        )
        if not cfg.use_fusion:
            return flat
        fused = digraph_fusion_attention(
            heads, arts.pagerank, batch_index, num_graphs,
            FusionWeights.view(params, f"{pre}.fusion"),
        )
        return ad.matmul(flatten_heads(fused), params[f"{pre}.wo"])

    y = scan_branch("fwd", arts_fwd)
    if cfg.bidirectional:
        y_rev = scan_branch("rev", arts_rev)
        y = ad.matmul(ad.concat([y, y_rev], axis=1), params[f"layers.{layer_index}.bi.w"])

    pre = f"layers.{layer_index}"
    y = ad.dropout(y, cfg.dropout, train, stream.child() if train and stream else None)
    h1 = ad.layer_norm(ad.add(h, y), params[f"{pre}.ln1.g"], params[f"{pre}.ln1.b"])
    f = ad.add(
        ad.matmul(
            ad.relu(ad.add(ad.matmul(h1, params[f"{pre}.ffn.w1"]), params[f"{pre}.ffn.b1"])),
            params[f"{pre}.ffn.w2"],
        ),
        params[f"{pre}.ffn.b2"],
    )
    f = ad.dropout(f, cfg.dropout, train, stream.child() if train and stream else None)
    return ad.layer_norm(ad.add(h1, f), params[f"{pre}.ln2.g"], params[f"{pre}.ln2.b"])


def model_forward(
    batch: GraphBatch,
    arts_fwd: PreprocessArtifacts,
    arts_rev: PreprocessArtifacts | None,
    cfg: ModelConfig,
    params: ParameterSet,
    train: bool = False,
    stream: RngStream | None = None,
) -> Tensor:
    """Predictions for a batch: (n, classes), (n, 1), (G, classes) or (G, 1)."""
    if batch.node_features.shape[1] != cfg.in_dim:
        raise ValueError(
            f"feature dim {batch.node_features.shape[1]} != config in_dim {cfg.in_dim}"
        )
    x = ad.constant(batch.node_features)
    h = encode_inputs(x, arts_fwd.depth, batch.edges, cfg, params)
    for li in range(cfg.num_layers):
        h = dirgraphssm_layer(
            h, arts_fwd, arts_rev, batch.batch_index, batch.num_graphs,
            cfg, params, li, train=train, stream=stream,
        )
    if cfg.task.startswith("node"):
        return ad.add(ad.matmul(h, params["head.w1"]), params["head.b1"])
    pooled = ad.segment_mean(h, batch.batch_index, batch.num_graphs)
    z = ad.relu(ad.add(ad.matmul(pooled, params["head.w1"]), params["head.b1"]))
    return ad.add(ad.matmul(z, params["head.w2"]), params["head.b2"])


def model_loss(predictions: Tensor, batch: GraphBatch, cfg: ModelConfig) -> Tensor:
    """Task loss: cross-entropy for classification, MSE for regression."""
    if cfg.task == "node-classify":
        return ad.cross_entropy(predictions, batch.node_labels())
    if cfg.task == "node-regress":
        target = ad.constant(np.asarray(batch.node_labels(), dtype=np.float64).reshape(-1, 1))
        return ad.mse_loss(predictions, target)
    if cfg.task == "graph-classify":
        return ad.cross_entropy(predictions, batch.graph_labels().astype(np.int64))
    target = ad.constant(np.asarray(batch.graph_labels(), dtype=np.float64).reshape(-1, 1))
    return ad.mse_loss(predictions, target)


# -- checkpointing ----------------------------------------------------------------


def save_model(
    path: str | Path,
    cfg: ModelConfig,
    params: ParameterSet,
    opt_arrays: dict[str, np.ndarray] | None = None,
    extra_meta: dict | None = None,
) -> None:
    arrays = {f"param.{name}": t.data for name, t in params.items()}
    if opt_arrays:
        arrays.update({f"opt.{name}": arr for name, arr in opt_arrays.items()})
    meta = {"config": cfg.to_dict()}
    if extra_meta:
        meta.update(extra_meta)
    save_arrays(path, arrays, meta)


def load_model(path: str | Path) -> tuple[ModelConfig, ParameterSet, dict, dict]:
    """Returns (config, params, optimizer arrays, meta)."""
    arrays, meta = load_arrays(path)
    cfg = ModelConfig.from_dict(meta["config"])
    params = ParameterSet()
    opt_arrays: dict[str, np.ndarray] = {}
    for name, arr in arrays.items():
        if name.startswith("param."):
            params.add(name[len("param.") :], Tensor(arr, requires_grad=True))
        elif name.startswith("opt."):
            opt_arrays[name[len("opt.") :]] = arr
    return cfg, params, opt_arrays, meta
