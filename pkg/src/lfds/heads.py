"""Aggregation heads built on a latent fixed data structure.

Node features are softly distributed over ``m`` latent elements by
similarity with learnable queries ``W``; a small CNN or GNN then runs on the
latent elements and two max readouts give the graph-level vector.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import functional as F
from .backbone import BackboneOutput, SpatialConvLayer, normalize_block
from .errors import ParameterError, ShapeError
from .optim import glorot_uniform, random_orthonormal
from .tensor import Tensor, concat, matmul, outer

IMAGE_SIDE = 8


class LfdsKind(str, enum.Enum):
    IMAGE = "image"
    ARRAY = "array"
    SEQUENCE = "sequence"
    LOOP = "loop"
    PARAM_SPATIAL = "param-spatial"
    PARAM_SPECTRAL = "param-spectral"

    @classmethod
    def parse(cls, value) -> LfdsKind:
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            names = ", ".join(k.value for k in cls)
            raise ParameterError(f"unknown head kind {value!r}; expected one of {names}") from None

    @property
    def uses_cnn(self) -> bool:
        return self in (LfdsKind.IMAGE, LfdsKind.ARRAY)

    @property
    def fixed_graph(self) -> bool:
        return self in (LfdsKind.SEQUENCE, LfdsKind.LOOP)


ALL_KINDS = tuple(LfdsKind)


@dataclass
class HeadConfig:
    kind: LfdsKind
    m: int = 16
    dim: int = 64
    element_dropout: float = 0.4
    lam: float = 1e-3
    fuse: bool = True

    def __post_init__(self):
        self.kind = LfdsKind.parse(self.kind)
        if self.kind is LfdsKind.IMAGE:
            self.m = IMAGE_SIDE * IMAGE_SIDE
        if self.m < 2:
            raise ParameterError(f"a latent structure needs m >= 2, got {self.m}")
        if self.kind is LfdsKind.LOOP and self.m < 3:
            raise ParameterError(f"a loop needs m >= 3, got {self.m}")


@dataclass
class HeadOutput:
    Y0: Tensor
    Y1: Tensor
    Y2: Tensor
    y1: Tensor
    y2: Tensor
    y: Tensor
    final: Tensor


# -- projection ----------------------------------------------------------------


def project(x: Tensor, w: Tensor) -> Tensor:
    """Distribute the rows of ``X [n, d]`` over the ``m`` rows of ``W [m, d]``.

    ``P = softmax_rows(X W^T)`` and ``Y = P^T X`` (the sum of ``p_i (x) x_i``).
    """
    if x.shape[-1] != w.shape[-1]:
        raise ShapeError(f"project: X {x.shape} and W {w.shape} have different widths")
    p = F.softmax_rows(x @ w.T)
    return p.T @ x


def project_bruteforce(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Reference: explicit loop over nodes summing outer products (numpy only)."""
    m = w.shape[0]
    y = np.zeros((m, x.shape[1]))
    for xi in x:
        s = np.array([xi @ wk for wk in w])
        e = np.exp(s - s.max())
        y += np.outer(e / e.sum(), xi)
    return y


def project_batch(x: Tensor, w: Tensor, offsets) -> Tensor:
    """Batched :func:`project` over stacked graphs: ``[N, d] -> [B, m, d]``."""
    if x.shape[-1] != w.shape[-1]:
        raise ShapeError(f"project: X {x.shape} and W {w.shape} have different widths")
    p = F.softmax_rows(x @ w.T)
    return F.segment_project(p, x, offsets)


def outer_sum(p: Tensor, x: Tensor) -> Tensor:
    """``sum_i p_i (x) x_i`` for row-stacked ``p [n, m]`` and ``x [n, d]``."""
    total = None
    for i in range(x.shape[0]):
        term = outer(p[i], x[i])
        total = term if total is None else total + term
    return total


# -- latent structures -----------------------------------------------------------


def fixed_adjacency(kind, m: int) -> np.ndarray:
    kind = LfdsKind.parse(kind) if not isinstance(kind, LfdsKind) else kind
    if kind not in (LfdsKind.SEQUENCE, LfdsKind.LOOP, LfdsKind.ARRAY):
        raise ParameterError(f"{kind.value} has no fixed adjacency")
    if m < 2:
        raise ParameterError(f"a sequence needs m >= 2, got {m}")
    if kind is LfdsKind.LOOP and m < 3:
        raise ParameterError(f"a loop needs m >= 3, got {m}")
    a = np.zeros((m, m))
    i = np.arange(m - 1)
    a[i, i + 1] = a[i + 1, i] = 1.0
    if kind is LfdsKind.LOOP:
        a[0, m - 1] = a[m - 1, 0] = 1.0
    return a


def learned_adjacency(b: Tensor) -> Tensor:
    """``sigmoid(B + B^T)`` with the diagonal zeroed."""
    if b.ndim != 2 or b.shape[0] != b.shape[1]:
        raise ShapeError(f"B must be square, got {b.shape}")
    s = F.sigmoid(b + b.T)
    return s * Tensor(1.0 - np.eye(b.shape[0]))


def orthonormality_penalty(u: Tensor, lam: float) -> Tensor:
    """``lam * ||U^T U - I||_F^2``."""
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise ShapeError(f"U must be square, got {u.shape}")
    r = u.T @ u - Tensor(np.eye(u.shape[0]))
    return (r * r).sum() * lam


def orthonormality_error(u: np.ndarray) -> float:
    """``||U^T U - I||_F`` as a plain float."""
    return float(np.linalg.norm(u.T @ u - np.eye(u.shape[0])))


# -- latent layers ---------------------------------------------------------------


def latent_spatial_conv(y: Tensor, a: Tensor, layer: SpatialConvLayer, mode: str = F.EVAL):
    """``bn(A' relu(Y phi2) + relu(Y phi1))`` for ``Y [.., m, d]``."""
    if y.shape[-2] != a.shape[0] or y.shape[-1] != layer.phi1.shape[0]:
        raise ShapeError(f"latent conv: Y {y.shape}, A' {a.shape}, phi {layer.phi1.shape}")
    neigh = matmul(a, F.relu(y @ layer.phi2))
    return normalize_block(neigh + F.relu(y @ layer.phi1), layer, mode)


def latent_spectral_conv(
    y: Tensor, u: Tensor, theta: Tensor, layer: SpatialConvLayer, mode: str = F.EVAL
):
    """``bn(relu(U diag(theta) U^T Y phi2) + relu(Y phi1))``."""
    m = y.shape[-2]
    if u.shape != (m, m) or theta.shape != (m,) or y.shape[-1] != layer.phi1.shape[0]:
        raise ShapeError(
            f"spectral conv: Y {y.shape}, U {u.shape}, theta {theta.shape}, phi {layer.phi1.shape}"
        )
    filt = (u * theta) @ u.T
    spec = matmul(filt, y @ layer.phi2)
    return normalize_block(F.relu(spec) + F.relu(y @ layer.phi1), layer, mode)


def _conv_block(x: Tensor, kernel: Tensor, layer, mode: str) -> Tensor:
    return normalize_block(F.relu(F.conv2d(x, kernel)), layer, mode)


def latent_cnn_forward(y: Tensor, kernels, layers, mode: str = F.EVAL):
    """Two 'same' 3x3 convolutions on ``[B, 8, 8, d]``, each ReLU then bn."""
    if y.ndim != 4 or y.shape[1:3] != (IMAGE_SIDE, IMAGE_SIDE):
        raise ShapeError(f"latent CNN expects [B, 8, 8, d], got {y.shape}")
    y1 = _conv_block(y, kernels[0], layers[0], mode)
    y2 = _conv_block(y1, kernels[1], layers[1], mode)
    return y1, y2


def fuse_maxpool(y: Tensor, x_max: Tensor, a1: Tensor, a2: Tensor) -> Tensor:
    """Every latent row becomes ``a1 * y_i + a2 * x_max``.

    ``y`` is ``[m, d]`` with ``x_max [d]`` or batched ``[B, m, d]`` with ``[B, d]``.
    """
    if y.shape[-1] != x_max.shape[-1]:
        raise ShapeError(f"fuse: Y {y.shape} vs x_max {x_max.shape}")
    if y.ndim == 3:
        x_max = x_max.reshape(x_max.shape[0], 1, x_max.shape[1])
    return a1 * y + a2 * x_max


# -- parameters --------------------------------------------------------------------


def init_head(rng: np.random.Generator, cfg: HeadConfig):
    d, m = cfg.dim, cfg.m
    kind = cfg.kind
    params: dict[str, Tensor] = {}
    bn: dict[str, F.BatchNormState] = {}

    def param(name, value):
        params[f"head.{name}"] = Tensor(value, requires_grad=True)

    w = rng.standard_normal((m, d)) / np.sqrt(d)
    param("W", w.reshape(IMAGE_SIDE, IMAGE_SIDE, d) if kind is LfdsKind.IMAGE else w)
    if kind is LfdsKind.PARAM_SPATIAL:
        param("B", rng.normal(scale=0.1, size=(m, m)))
    if kind is LfdsKind.PARAM_SPECTRAL:
        param("U", random_orthonormal(rng, m))
    for k in range(2):
        if kind is LfdsKind.IMAGE:
            param(f"layer{k}.kernel", glorot_uniform(rng, 9 * d, 9 * d, (3, 3, d, d)))
        elif kind is LfdsKind.ARRAY:
            param(f"layer{k}.kernel", glorot_uniform(rng, 3 * d, 3 * d, (1, 3, d, d)))
        else:
            param(f"layer{k}.phi1", glorot_uniform(rng, d, d))
            param(f"layer{k}.phi2", glorot_uniform(rng, d, d))
        if kind is LfdsKind.PARAM_SPECTRAL:
            param(f"layer{k}.theta", np.ones(m))
        param(f"layer{k}.bn.gamma", np.ones(d))
        param(f"layer{k}.bn.beta", np.zeros(d))
        bn[f"head.layer{k}.bn"] = F.BatchNormState(d)
    param("a1_raw", np.array(F.inverse_softplus(1.0)))
    param("a2_raw", np.array(F.inverse_softplus(1.0)))
    return params, bn


def _layer(params, bn, k: int):
    p = f"head.layer{k}"
    return SpatialConvLayer(
        params.get(f"{p}.phi1", params.get(f"{p}.kernel")),
        params.get(f"{p}.phi2", params.get(f"{p}.kernel")),
        params[f"{p}.bn.gamma"],
        params[f"{p}.bn.beta"],
        bn[f"{p}.bn"],
    )


def head_forward(
    bout: BackboneOutput,
    params,
    bn,
    cfg: HeadConfig,
    mode: str = F.EVAL,
    rng: np.random.Generator | None = None,
) -> HeadOutput:
    kind = cfg.kind
    x = bout.per_layer[-1]
    d = x.shape[1]
    w = params["head.W"]
    if w.shape[-1] != d:
        raise ShapeError(f"head W {w.shape} does not match backbone width {d}")
    if kind is LfdsKind.IMAGE:
        w = w.reshape(cfg.m, d)
    b = bout.num_graphs

    y0 = project_batch(x, w, bout.offsets)
    if cfg.fuse:
        a1 = F.softplus(params["head.a1_raw"])
        a2 = F.softplus(params["head.a2_raw"])
        y0 = fuse_maxpool(y0, bout.last_max, a1, a2)
    y0 = F.element_dropout(y0, cfg.element_dropout, mode, rng)

    layers = [_layer(params, bn, k) for k in range(2)]
    if kind is LfdsKind.IMAGE:
        grid = y0.reshape(b, IMAGE_SIDE, IMAGE_SIDE, d)
        g1, g2 = latent_cnn_forward(grid, [l.phi1 for l in layers], layers, mode)
        y1_map, y2_map = g1.reshape(b, cfg.m, d), g2.reshape(b, cfg.m, d)
    elif kind is LfdsKind.ARRAY:
        row = y0.reshape(b, 1, cfg.m, d)
        r1 = _conv_block(row, layers[0].phi1, layers[0], mode)
        r2 = _conv_block(r1, layers[1].phi1, layers[1], mode)
        y1_map, y2_map = r1.reshape(b, cfg.m, d), r2.reshape(b, cfg.m, d)
    elif kind is LfdsKind.PARAM_SPECTRAL:
        u = params["head.U"]
        y1_map = latent_spectral_conv(y0, u, params["head.layer0.theta"], layers[0], mode)
        y2_map = latent_spectral_conv(y1_map, u, params["head.layer1.theta"], layers[1], mode)
    else:
        if kind is LfdsKind.PARAM_SPATIAL:
            a = learned_adjacency(params["head.B"])
        else:
            a = Tensor(fixed_adjacency(kind, cfg.m))
        y1_map = latent_spatial_conv(y0, a, layers[0], mode)
        y2_map = latent_spatial_conv(y1_map, a, layers[1], mode)

    y1 = y1_map.max(axis=1)
    y2 = y2_map.max(axis=1)
    y = concat([y1, y2], axis=1)
    final = concat([bout.x_max, y], axis=1)
    return HeadOutput(y0, y1_map, y2_map, y1, y2, y, final)


def max_pool_baseline(bout: BackboneOutput) -> Tensor:
    return bout.x_max


def head_penalty(params, cfg: HeadConfig) -> Tensor | None:
    if cfg.kind is LfdsKind.PARAM_SPECTRAL:
        return orthonormality_penalty(params["head.U"], cfg.lam)
    return None
