"""Differentiable building blocks on top of :mod:`lfds.tensor`.

Most functions here are fused: the forward result and the analytic
backward rule are written together instead of being composed from
primitives, which keeps the recorded graph short.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyInputError, ParameterError, ShapeError
from .tensor import Tensor, make_op

TRAIN = "train"
EVAL = "eval"


def _check_mode(mode: str) -> None:
    if mode not in (TRAIN, EVAL):
        raise ParameterError(f"mode must be 'train' or 'eval', got {mode!r}")


# -- elementwise -------------------------------------------------------------


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return make_op(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid(a: Tensor) -> Tensor:
    s = _sigmoid(a.data)
    return make_op(s, (a,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def softplus(a: Tensor) -> Tensor:
    x = a.data
    return make_op(np.logaddexp(0.0, x), (a,), lambda g: (g * _sigmoid(x),), "softplus")


def inverse_softplus(y: float) -> float:
    return float(np.log(np.expm1(y)))


def elementwise(a: Tensor, kind: str) -> Tensor:
    if kind == "relu":
        return relu(a)
    if kind == "sigmoid":
        return sigmoid(a)
    raise ParameterError(f"unknown elementwise kind {kind!r}")


def softmax_rows(a: Tensor) -> Tensor:
    """Softmax along the last axis, stabilised by subtracting the row max."""
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)

    def back(g):
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)

    return make_op(s, (a,), back, "softmax")


# -- normalisation and regularisation -------------------------------------------


@dataclass
class BatchNormState:
    """Running statistics for one batch-norm layer."""

    num_features: int
    momentum: float = 0.9
    eps: float = 1e-5
    running_mean: np.ndarray = field(default=None)
    running_var: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.running_mean is None:
            self.running_mean = np.zeros(self.num_features)
        if self.running_var is None:
            self.running_var = np.ones(self.num_features)


def batch_norm(
    a: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState, mode: str = TRAIN
) -> Tensor:
    """Normalise each feature (last axis) over all remaining axes.

    Train mode uses the batch statistics and updates the running ones
    (``running = momentum * running + (1 - momentum) * batch``); eval mode
    uses the running statistics only.
    """
    _check_mode(mode)
    d = a.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"batch_norm: input {a.shape} vs gamma {gamma.shape} beta {beta.shape}")
    x = a.data.reshape(-1, d)
    n = x.shape[0]
    if n == 0:
        raise EmptyInputError("batch_norm on an empty batch")
    gam = gamma.data

    if mode == TRAIN:
        mu = x.mean(axis=0)
        var = x.var(axis=0)
        inv = 1.0 / np.sqrt(var + state.eps)
        xhat = (x - mu) * inv
        unbiased = var * n / (n - 1) if n > 1 else var
        state.running_mean = state.momentum * state.running_mean + (1 - state.momentum) * mu
        state.running_var = state.momentum * state.running_var + (1 - state.momentum) * unbiased

        def back(g):
            g = g.reshape(-1, d)
            dxhat = g * gam
            dx = inv / n * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
            return dx.reshape(a.shape), (g * xhat).sum(axis=0), g.sum(axis=0)

    else:
        inv = 1.0 / np.sqrt(state.running_var + state.eps)
        xhat = (x - state.running_mean) * inv

        def back(g):
            g = g.reshape(-1, d)
            return (g * gam * inv).reshape(a.shape), (g * xhat).sum(axis=0), g.sum(axis=0)

    out = (xhat * gam + beta.data).reshape(a.shape)
    return make_op(out, (a, gamma, beta), back, "batch_norm")


def _check_p(p: float) -> None:
    if not 0.0 <= p < 1.0:
        raise ParameterError(f"dropout probability must be in [0, 1), got {p}")


def dropout(a: Tensor, p: float, mode: str, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout on individual entries."""
    _check_p(p)
    _check_mode(mode)
    if mode == EVAL or p == 0.0:
        return a
    mask = (rng.random(a.shape) >= p) / (1.0 - p)
    return a * Tensor(mask)


def element_dropout(
    a: Tensor, p: float, mode: str, rng: np.random.Generator | None = None
) -> Tensor:
    """Inverted dropout of whole rows (the last axis is kept together)."""
    _check_p(p)
    _check_mode(mode)
    if mode == EVAL or p == 0.0:
        return a
    keep = (rng.random(a.shape[:-1] + (1,)) >= p) / (1.0 - p)
    return a * Tensor(keep)


# -- losses ----------------------------------------------------------------------


def cross_entropy(logits: Tensor, label) -> Tensor:
    """Mean of ``-log softmax(logits)[label]`` over the batch.

    ``logits`` is ``[c]`` with an integer label or ``[B, c]`` with ``B`` labels.
    """
    z = logits.data
    single = z.ndim == 1
    z2 = z.reshape(1, -1) if single else z
    labels = np.atleast_1d(np.asarray(label))
    c = z2.shape[1]
    if labels.shape != (z2.shape[0],):
        raise ShapeError(f"cross_entropy: {labels.shape[0]} labels for logits {z.shape}")
    if labels.dtype.kind not in "iu" or np.any(labels < 0) or np.any(labels >= c):
        raise ParameterError(f"label out of range [0, {c}): {labels.tolist()}")
    shifted = z2 - z2.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(z2.shape[0])
    losses = logsum - shifted[rows, labels]
    b = z2.shape[0]

    def back(g):
        probs = np.exp(shifted - logsum[:, None])
        probs[rows, labels] -= 1.0
        return (((g / b) * probs).reshape(z.shape),)

    return make_op(np.asarray(losses.mean()), (logits,), back, "cross_entropy")


# -- convolution -------------------------------------------------------------------


def conv2d(x: Tensor, kernel: Tensor) -> Tensor:
    """'Same' 2D convolution, stride 1, zero padding, channels-last.

    ``x`` is ``[B, H, W, C_in]`` and ``kernel`` ``[kh, kw, C_in, C_out]`` with odd
    ``kh``/``kw``; the output is ``[B, H, W, C_out]``.
    """
    if x.ndim != 4 or kernel.ndim != 4:
        raise ShapeError(f"conv2d expects 4D input and kernel, got {x.shape}, {kernel.shape}")
    b, h, w, cin = x.shape
    kh, kw, kcin, cout = kernel.shape
    if kcin != cin:
        raise ShapeError(f"conv2d channel mismatch: input {x.shape}, kernel {kernel.shape}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"conv2d needs odd kernel sizes, got {kernel.shape}")
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x.data, ((0, 0), (ph, ph), (pw, pw), (0, 0)))
    patches = np.empty((b, h, w, kh, kw, cin))
    for i in range(kh):
        for j in range(kw):
            patches[:, :, :, i, j, :] = xp[:, i : i + h, j : j + w, :]
    cols = patches.reshape(b * h * w, kh * kw * cin)
    kmat = kernel.data.reshape(kh * kw * cin, cout)
    out = (cols @ kmat).reshape(b, h, w, cout)

    def back(g):
        g2 = g.reshape(b * h * w, cout)
        gk = (cols.T @ g2).reshape(kernel.shape)
        gcols = (g2 @ kmat.T).reshape(b, h, w, kh, kw, cin)
        gxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                gxp[:, i : i + h, j : j + w, :] += gcols[:, :, :, i, j, :]
        return gxp[:, ph : ph + h, pw : pw + w, :], gk

    return make_op(out, (x, kernel), back, "conv2d")


# -- disjoint-union graph batches ---------------------------------------------------


def propagate(adjacency, z: Tensor) -> Tensor:
    """Multiply node rows by the (block-diagonal) adjacency.

    ``adjacency`` is a dense ``[n, n]`` array or a :class:`BlockAdjacency`.
    """
    if isinstance(adjacency, BlockAdjacency):
        return adjacency.propagate(z)
    a = np.asarray(adjacency, dtype=np.float64)
    if a.shape != (z.shape[0], z.shape[0]):
        raise ShapeError(f"adjacency {a.shape} does not match features {z.shape}")
    return make_op(a @ z.data, (z,), lambda g: (a.T @ g,), "propagate")


class BlockAdjacency:
    """Block-diagonal adjacency of a batch of graphs stacked row-wise."""

    def __init__(self, blocks, offsets):
        self.blocks = [np.asarray(b, dtype=np.float64) for b in blocks]
        self.offsets = np.asarray(offsets, dtype=np.int64)
        for k, blk in enumerate(self.blocks):
            size = self.offsets[k + 1] - self.offsets[k]
            if blk.shape != (size, size):
                raise ShapeError(f"block {k} has shape {blk.shape}, expected ({size}, {size})")

    @property
    def num_nodes(self) -> int:
        return int(self.offsets[-1])

    def propagate(self, z: Tensor) -> Tensor:
        if z.shape[0] != self.num_nodes:
            raise ShapeError(f"batch has {self.num_nodes} nodes, features have {z.shape[0]} rows")
        segs = list(zip(self.offsets[:-1], self.offsets[1:]))
        out = np.empty_like(z.data)
        for blk, (s, e) in zip(self.blocks, segs):
            out[s:e] = blk @ z.data[s:e]

        def back(g):
            gz = np.empty_like(g)
            for blk, (s, e) in zip(self.blocks, segs):
                gz[s:e] = blk.T @ g[s:e]
            return (gz,)

        return make_op(out, (z,), back, "block_propagate")


def segment_max(x: Tensor, offsets) -> Tensor:
    """Per-graph column maximum of stacked node rows: ``[N, d] -> [B, d]``.

    Ties route the gradient to the lowest row index within the segment.
    """
    offsets = np.asarray(offsets, dtype=np.int64)
    counts = np.diff(offsets)
    if np.any(counts <= 0):
        raise EmptyInputError("segment_max over a graph with no nodes")
    data = x.data
    nseg = len(counts)
    idx = np.empty((nseg, data.shape[1]), dtype=np.int64)
    for k in range(nseg):
        s, e = offsets[k], offsets[k + 1]
        idx[k] = s + np.argmax(data[s:e], axis=0)
    cols = np.arange(data.shape[1])
    out = data[idx, cols[None, :]]

    def back(g):
        gx = np.zeros_like(data)
        np.add.at(gx, (idx, np.broadcast_to(cols, idx.shape)), g)
        return (gx,)

    return make_op(out, (x,), back, "segment_max")


def segment_project(p: Tensor, x: Tensor, offsets) -> Tensor:
    """Per-graph ``P_g^T X_g``: ``[N, m]`` and ``[N, d]`` to ``[B, m, d]``."""
    offsets = np.asarray(offsets, dtype=np.int64)
    if p.shape[0] != x.shape[0] or offsets[-1] != x.shape[0]:
        raise ShapeError(f"segment_project: P {p.shape}, X {x.shape}, {offsets[-1]} nodes")
    segs = list(zip(offsets[:-1], offsets[1:]))
    pd, xd = p.data, x.data
    out = np.stack([pd[s:e].T @ xd[s:e] for s, e in segs])

    def back(g):
        gp = np.empty_like(pd)
        gx = np.empty_like(xd)
        for k, (s, e) in enumerate(segs):
            gp[s:e] = xd[s:e] @ g[k].T
            gx[s:e] = pd[s:e] @ g[k]
        return gp, gx

    return make_op(out, (p, x), back, "segment_project")
