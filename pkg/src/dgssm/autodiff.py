"""Minimal dense-tensor engine with reverse-mode differentiation.

Tensors wrap row-major numpy arrays (float64 by default; float32 behind
:func:`set_default_dtype`). Each operation records its parents and a closure
that maps the incoming gradient to per-parent gradients; ``backward()`` on a
scalar replays the graph in reverse topological order and accumulates
gradients onto leaf tensors with ``requires_grad``.

Graph sparsity is handled by index-based segment operations (sum / mean /
max / softmax keyed by an index vector) rather than sparse matrices.
Elementwise ops broadcast by numpy trailing-axis rules; gradients of
broadcast inputs are reduced back to the input shape. The model only relies
on the patterns (n,d)+(d,), (E,h,dh)*(E,h,1), (C,n,dh)*(1,n,dh),
(dh,n,C)*(1,n,C), (n,dh,C)*(n,1,1) and scalar ops, all covered by that rule.
"""

from __future__ import annotations

import numpy as np

from .rng import RngStream

_DEFAULT_DTYPE = np.float64


def set_default_dtype(name: str) -> None:
    """Switch the engine between 'float64' (default) and 'float32'."""
    global _DEFAULT_DTYPE
    if name not in ("float64", "float32"):
        raise ValueError(f"unsupported dtype {name!r}")
    _DEFAULT_DTYPE = np.dtype(name).type


def default_dtype():
    return _DEFAULT_DTYPE


class ShapeError(ValueError):
    """Raised when operand shapes violate an operation's contract."""


class Tensor:
    """A dense array node in a reverse-mode gradient graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=_DEFAULT_DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    # -- basic introspection -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def zero_grad(self) -> None:
        self.grad = None

    # -- autodiff ------------------------------------------------------------
    def backward(self) -> None:
        """Backpropagate from a scalar; leaf grads accumulate until zeroed."""
        if self.size != 1:
            raise ShapeError(f"backward: loss must be scalar, got shape {self.shape}")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad = g if node.grad is None else node.grad + g
                continue
            for p, pg in zip(node._parents, node._backward(g)):
                if pg is None or not p.requires_grad:
                    continue
                key = id(p)
                grads[key] = pg if key not in grads else grads[key] + pg

    # -- operator sugar --------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(x) -> Tensor:
    """A non-trainable tensor (gradient sink)."""
    return Tensor(x, requires_grad=False)


def _node(data, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to ``shape``."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- elementwise arithmetic ----------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(
        a.data * b.data,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.data, a.shape),
            _unbroadcast(g * a.data, b.shape),
        ),
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(
        a.data / b.data,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        ),
    )


def exp(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.exp(a.data)
    return _node(out_data, (a,), lambda g: (g * out_data,))


def log(a) -> Tensor:
    a = as_tensor(a)
    return _node(np.log(a.data), (a,), lambda g: (g / a.data,))


def power(a, p: float) -> Tensor:
    """Elementwise a**p for a constant exponent."""
    a = as_tensor(a)
    return _node(
        a.data**p, (a,), lambda g: (g * p * a.data ** (p - 1),)
    )


def sqrt(a) -> Tensor:
    return power(a, 0.5)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    s = 1.0 / (1.0 + np.exp(-a.data))
    return _node(s, (a,), lambda g: (g * s * (1.0 - s),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _node(a.data * mask, (a,), lambda g: (g * mask,))


# -- linear algebra and structure ------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    return _node(
        a.data @ b.data,
        (a, b),
        lambda g: (g @ b.data.T, a.data.T @ g),
    )


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return _node(
        a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),)
    )


def transpose(a, axes: tuple[int, ...]) -> Tensor:
    """Permute axes; ``axes`` maps output axis i to input axis axes[i]."""
    a = as_tensor(a)
    inv = np.argsort(axes)
    return _node(
        np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),)
    )


def move_axis_front(a, axis: int) -> Tensor:
    """The permutation P that brings ``axis`` to position 0."""
    order = (axis,) + tuple(i for i in range(as_tensor(a).ndim) if i != axis)
    return transpose(a, order)


def move_front_back(a, axis: int) -> Tensor:
    """Inverse of :func:`move_axis_front` for the same ``axis``."""
    a = as_tensor(a)
    rest = [i for i in range(a.ndim) if i != axis]
    inv = [0] * a.ndim
    inv[axis] = 0
    for pos, i in enumerate(rest, start=1):
        inv[i] = pos
    return transpose(a, tuple(inv))


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, splits, axis=axis))

    return _node(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), bwd)


def gather_rows(a, idx) -> Tensor:
    """Select rows (leading-axis entries) by an integer index array."""
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)
    return _node(
        a.data[idx], (a,), lambda g: (scatter_add_rows(a.shape, idx, g),)
    )


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.shape).copy(),)

    return _node(a.data.sum(axis=axis, keepdims=keepdims), (a,), bwd)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        count = a.size
    elif isinstance(axis, tuple):
        count = int(np.prod([a.shape[i] for i in axis]))
    else:
        count = a.shape[axis]
    return mul(sum_(a, axis=axis, keepdims=keepdims), 1.0 / count)


def max_(a, axis: int, keepdims: bool = False) -> Tensor:
    """Max along one axis; ties route the gradient to the first maximum."""
    a = as_tensor(a)
    out = a.data.max(axis=axis, keepdims=True)
    arg = a.data.argmax(axis=axis)
    onehot = np.zeros_like(a.data)
    np.put_along_axis(onehot, np.expand_dims(arg, axis), 1.0, axis=axis)

    def bwd(g):
        gg = g if keepdims else np.expand_dims(g, axis)
        return (onehot * gg,)

    return _node(out if keepdims else out.squeeze(axis), (a,), bwd)


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        dot = (g * s).sum(axis=axis, keepdims=True)
        return (s * (g - dot),)

    return _node(s, (a,), bwd)


# -- segment operations (variable-length groups keyed by an index vector) -------
#
# Reductions go through argsort + ufunc.reduceat rather than np.add.at: the
# index vectors here are large (one entry per k-hop pair) and reduceat is the
# vectorized path. Already-sorted keys (the common case: pairs are emitted
# center-ascending) skip the argsort.


def _group(seg: np.ndarray):
    """(perm, sorted_seg, group_starts, group_ids); perm None if pre-sorted."""
    if seg.size == 0:
        return None, seg, np.zeros(0, np.intp), np.zeros(0, np.int64)
    if np.all(seg[1:] >= seg[:-1]):
        perm, s = None, seg
    else:
        perm = np.argsort(seg, kind="stable")
        s = seg[perm]
    starts = np.flatnonzero(np.concatenate(([True], s[1:] != s[:-1]))).astype(np.intp)
    return perm, s, starts, s[starts]


def _seg_reduce(x: np.ndarray, seg: np.ndarray, num: int, ufunc) -> np.ndarray:
    fill = 0.0 if ufunc is np.add else -np.inf
    out = np.full((num,) + x.shape[1:], fill, dtype=x.dtype)
    if x.shape[0] == 0:
        return out
    perm, _, starts, ids = _group(seg)
    xs = x if perm is None else x[perm]
    out[ids] = ufunc.reduceat(xs, starts, axis=0)
    return out


def _segment_sum_data(x: np.ndarray, seg: np.ndarray, num: int) -> np.ndarray:
    return _seg_reduce(x, seg, num, np.add)


def scatter_add_rows(shape: tuple[int, ...], idx: np.ndarray, vals: np.ndarray) -> np.ndarray:
    """Accumulate ``vals`` rows into a zero array of ``shape`` at rows ``idx``."""
    return _seg_reduce(vals, idx, shape[0], np.add).astype(vals.dtype)


def _check_segments(a: Tensor, seg: np.ndarray) -> np.ndarray:
    seg = np.asarray(seg, dtype=np.int64)
    if seg.ndim != 1 or seg.shape[0] != a.shape[0]:
        raise ShapeError(
            f"segment op: index length {seg.shape} does not match rows {a.shape}"
        )
    return seg


def segment_sum(a, seg, num_segments: int) -> Tensor:
    a = as_tensor(a)
    seg = _check_segments(a, seg)
    return _node(
        _segment_sum_data(a.data, seg, num_segments),
        (a,),
        lambda g: (g[seg],),
    )


def segment_mean(a, seg, num_segments: int) -> Tensor:
    a = as_tensor(a)
    seg = _check_segments(a, seg)
    counts = np.bincount(seg, minlength=num_segments).astype(a.data.dtype)
    counts = np.maximum(counts, 1.0).reshape((num_segments,) + (1,) * (a.ndim - 1))
    return _node(
        _segment_sum_data(a.data, seg, num_segments) / counts,
        (a,),
        lambda g: ((g / counts)[seg],),
    )


def segment_max(a, seg, num_segments: int) -> Tensor:
    """Per-segment elementwise max over rows; empty segments yield 0.

    Ties route the gradient to the earliest row attaining the max.
    """
    a = as_tensor(a)
    seg = _check_segments(a, seg)
    feat_shape = a.shape[1:]
    out = np.zeros((num_segments,) + feat_shape, dtype=a.data.dtype)
    winners = np.full((num_segments,) + feat_shape, -1, dtype=np.int64)
    perm, _, starts, ids = _group(seg)
    if a.shape[0]:
        ends = np.append(starts[1:], seg.shape[0])
        xs = a.data if perm is None else a.data[perm]
        rows = np.arange(seg.shape[0]) if perm is None else perm
        for st, en, sid in zip(starts, ends, ids):
            local = np.argmax(xs[st:en], axis=0)
            out[sid] = np.take_along_axis(xs[st:en], local[None], axis=0)[0]
            winners[sid] = rows[st:en][local]

    def bwd(g):
        grad = np.zeros_like(a.data)
        live = winners >= 0
        flat_feat = int(np.prod(feat_shape)) if feat_shape else 1
        w = winners.reshape(num_segments, flat_feat)
        gg = g.reshape(num_segments, flat_feat)
        gflat = grad.reshape(a.shape[0], flat_feat)
        lv = live.reshape(num_segments, flat_feat)
        cols = np.broadcast_to(np.arange(flat_feat), w.shape)
        np.add.at(gflat, (w[lv], cols[lv]), gg[lv])
        return (grad,)

    return _node(out, (a,), bwd)


def segment_softmax(a, seg, num_segments: int) -> Tensor:
    """Softmax normalized within each segment of the leading axis."""
    a = as_tensor(a)
    seg = _check_segments(a, seg)
    mx = _seg_reduce(a.data, seg, num_segments, np.maximum)
    mx = np.where(np.isinf(mx), 0.0, mx)
    e = np.exp(a.data - mx[seg])
    denom = _segment_sum_data(e, seg, num_segments)
    s = e / denom[seg]

    def bwd(g):
        dot = _segment_sum_data(g * s, seg, num_segments)
        return (s * (g - dot[seg]),)

    return _node(s, (a,), bwd)


# -- normalization, convolution, dropout ----------------------------------------


def layer_norm(a, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    a, gain, bias = as_tensor(a), as_tensor(gain), as_tensor(bias)
    if gain.shape != a.shape[-1:] or bias.shape != a.shape[-1:]:
        raise ShapeError(
            f"layer_norm: gain/bias {gain.shape}/{bias.shape} vs features {a.shape}"
        )
    mu = mean(a, axis=-1, keepdims=True)
    centered = sub(a, mu)
    var = mean(mul(centered, centered), axis=-1, keepdims=True)
    inv = power(add(var, eps), -0.5)
    return add(mul(mul(centered, inv), gain), bias)


def conv1d(x, w, b, padding: int) -> Tensor:
    """1D convolution: x (B, C_in, L) * w (C_out, C_in, k) + b (C_out,).

    Symmetric zero padding; output length L + 2*padding - k + 1.
    """
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if x.ndim != 3 or w.ndim != 3 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv1d: x {x.shape} vs w {w.shape}")
    B, Cin, L = x.shape
    Cout, _, k = w.shape
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding)))
    Lout = L + 2 * padding - k + 1
    if Lout < 1:
        raise ShapeError(f"conv1d: kernel {k} too large for length {L} (pad {padding})")
    out = np.tile(b.data.reshape(1, Cout, 1), (B, 1, Lout)).astype(x.data.dtype)
    for t in range(k):
        out += np.einsum("bcl,oc->bol", xp[:, :, t : t + Lout], w.data[:, :, t])

    def bwd(g):
        gx_p = np.zeros_like(xp)
        gw = np.zeros_like(w.data)
        for t in range(k):
            gx_p[:, :, t : t + Lout] += np.einsum("bol,oc->bcl", g, w.data[:, :, t])
            gw[:, :, t] = np.einsum("bol,bcl->oc", g, xp[:, :, t : t + Lout])
        gx = gx_p[:, :, padding : padding + L] if padding else gx_p
        return (gx, gw, g.sum(axis=(0, 2)))

    return _node(out, (x, w, b), bwd)


def conv2d(x, w, b, padding: int) -> Tensor:
    """2D convolution: x (B, C_in, H, W) * w (C_out, C_in, kh, kw) + b."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv2d: x {x.shape} vs w {w.shape}")
    B, Cin, H, W = x.shape
    Cout, _, kh, kw = w.shape
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    Hout = H + 2 * padding - kh + 1
    Wout = W + 2 * padding - kw + 1
    if Hout < 1 or Wout < 1:
        raise ShapeError(f"conv2d: kernel {(kh, kw)} too large for {(H, W)}")
    out = np.tile(b.data.reshape(1, Cout, 1, 1), (B, 1, Hout, Wout)).astype(x.data.dtype)
    for i in range(kh):
        for j in range(kw):
            out += np.einsum(
                "bchw,oc->bohw", xp[:, :, i : i + Hout, j : j + Wout], w.data[:, :, i, j]
            )

    def bwd(g):
        gx_p = np.zeros_like(xp)
        gw = np.zeros_like(w.data)
        for i in range(kh):
            for j in range(kw):
                gx_p[:, :, i : i + Hout, j : j + Wout] += np.einsum(
                    "bohw,oc->bchw", g, w.data[:, :, i, j]
                )
                gw[:, :, i, j] = np.einsum(
                    "bohw,bchw->oc", g, xp[:, :, i : i + Hout, j : j + Wout]
                )
        gx = gx_p[:, :, padding : padding + H, padding : padding + W] if padding else gx_p
        return (gx, gw, g.sum(axis=(0, 2, 3)))

    return _node(out, (x, w, b), bwd)


def dropout(a, p: float, train: bool, stream: RngStream | None = None) -> Tensor:
    """Inverted dropout; identity when not training or p == 0."""
    a = as_tensor(a)
    if not train or p == 0.0:
        return a
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout: p must be in [0, 1), got {p}")
    if stream is None:
        raise ValueError("dropout: an RngStream is required in train mode")
    mask = (stream.uniform(size=a.shape) >= p) / (1.0 - p)
    return _node(a.data * mask, (a,), lambda g: (g * mask,))


# -- losses ----------------------------------------------------------------------


def mse_loss(pred, target) -> Tensor:
    """Mean squared error over all entries."""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss: {pred.shape} vs {target.shape}")
    diff = sub(pred, target)
    return mean(mul(diff, diff))


def cross_entropy(logits, labels) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under ``logits``."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(
            f"cross_entropy: logits {logits.shape} vs labels {labels.shape}"
        )
    n = logits.shape[0]
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logprob = z - logsumexp
    loss = -logprob[np.arange(n), labels].mean()

    def bwd(g):
        grad = np.exp(logprob)
        grad[np.arange(n), labels] -= 1.0
        return (g * grad / n,)

    return _node(np.asarray(loss), (logits,), bwd)


class ParameterSet:
    """Named trainable tensors with a stable iteration order."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, t: Tensor) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t.requires_grad = True
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def tensors(self) -> list[Tensor]:
        return list(self._params.values())

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def num_values(self) -> int:
        return sum(t.size for t in self._params.values())
