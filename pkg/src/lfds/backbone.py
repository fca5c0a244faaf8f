"""Spatial graph-convolution backbone that extracts local node features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import functional as F
from .data.graph import GraphBatch, GraphSample
from .errors import ShapeError
from .optim import glorot_uniform
from .tensor import Tensor, concat


@dataclass
class SpatialConvLayer:
    phi1: Tensor
    phi2: Tensor
    gamma: Tensor | None = None
    beta: Tensor | None = None
    bn_state: F.BatchNormState | None = None

    def __post_init__(self):
        if self.phi1.shape != self.phi2.shape:
            raise ShapeError(f"phi1 {self.phi1.shape} and phi2 {self.phi2.shape} differ")

    @classmethod
    def from_params(cls, params, bn, prefix: str) -> SpatialConvLayer:
        return cls(
            params[f"{prefix}.phi1"],
            params[f"{prefix}.phi2"],
            params.get(f"{prefix}.bn.gamma"),
            params.get(f"{prefix}.bn.beta"),
            bn.get(f"{prefix}.bn"),
        )


def normalize_block(z: Tensor, layer, mode: str) -> Tensor:
    """Batch-norm over the rows of ``z`` unless the layer has no bn parameters."""
    if layer.bn_state is None:
        return z
    return F.batch_norm(z, layer.gamma, layer.beta, layer.bn_state, mode)


def spatial_conv(x: Tensor, adjacency, layer: SpatialConvLayer, mode: str = F.EVAL) -> Tensor:
    """``bn(A relu(X phi2) + relu(X phi1))``.

    ``adjacency`` is a dense matrix for one graph or a BlockAdjacency.
    """
    if x.shape[-1] != layer.phi1.shape[0]:
        raise ShapeError(f"features {x.shape} do not match phi {layer.phi1.shape}")
    neigh = F.propagate(adjacency, F.relu(x @ layer.phi2))
    return normalize_block(neigh + F.relu(x @ layer.phi1), layer, mode)


def init_backbone(rng: np.random.Generator, in_dim: int, hidden: int = 64, num_layers: int = 3):
    params: dict[str, Tensor] = {}
    bn: dict[str, F.BatchNormState] = {}
    d_in = in_dim
    for k in range(num_layers):
        p = f"backbone.layer{k}"
        params[f"{p}.phi1"] = Tensor(glorot_uniform(rng, d_in, hidden), requires_grad=True)
        params[f"{p}.phi2"] = Tensor(glorot_uniform(rng, d_in, hidden), requires_grad=True)
        params[f"{p}.bn.gamma"] = Tensor(np.ones(hidden), requires_grad=True)
        params[f"{p}.bn.beta"] = Tensor(np.zeros(hidden), requires_grad=True)
        bn[f"{p}.bn"] = F.BatchNormState(hidden)
        d_in = hidden
    return params, bn


@dataclass
class BackboneOutput:
    """Per-layer node features of a batch and their per-graph max readouts.

    ``x_max`` is ``[B, sum of layer widths]``; ``last_max`` is the max readout
    of the final layer only, ``[B, hidden]``.
    """

    per_layer: list[Tensor]
    concat: Tensor
    x_max: Tensor
    last_max: Tensor
    offsets: np.ndarray

    @property
    def num_graphs(self) -> int:
        return len(self.offsets) - 1


def as_batch(graphs, normalize: bool = False) -> GraphBatch:
    if isinstance(graphs, GraphBatch):
        return graphs
    if isinstance(graphs, GraphSample):
        graphs = [graphs]
    return GraphBatch.from_samples(graphs, normalize=normalize)


def backbone_forward(
    graphs,
    params,
    bn,
    mode: str = F.EVAL,
    rng: np.random.Generator | None = None,
    node_dropout: float = 0.2,
    num_layers: int | None = None,
) -> BackboneOutput:
    """Run the spatial layers on a sample, a list of samples or a GraphBatch."""
    batch = as_batch(graphs)
    if num_layers is None:
        num_layers = sum(1 for k in params if k.startswith("backbone.layer") and k.endswith(".phi1"))
    x = Tensor(batch.features)
    expected = params["backbone.layer0.phi1"].shape[0]
    if x.shape[1] != expected:
        raise ShapeError(f"node features have {x.shape[1]} columns, backbone expects {expected}")
    x = F.element_dropout(x, node_dropout, mode, rng)
    outs = []
    for k in range(num_layers):
        layer = SpatialConvLayer.from_params(params, bn, f"backbone.layer{k}")
        x = spatial_conv(x, batch.adjacency, layer, mode)
        outs.append(x)
    cat = concat(outs, axis=1)
    return BackboneOutput(
        per_layer=outs,
        concat=cat,
        x_max=F.segment_max(cat, batch.offsets),
        last_max=F.segment_max(outs[-1], batch.offsets),
        offsets=batch.offsets,
    )
