"""Graph samples, datasets and disjoint-union batches."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ParameterError, ShapeError
from ..functional import BlockAdjacency


def edges_from_adjacency(adj: np.ndarray) -> np.ndarray:
    """Sorted ``[E, 2]`` list of undirected edges ``(i, j)`` with ``i < j``."""
    i, j = np.nonzero(np.triu(adj, k=1))
    return np.stack([i, j], axis=1).astype(np.int64)


def adjacency_from_edges(n: int, edges: np.ndarray) -> np.ndarray:
    adj = np.zeros((n, n))
    if len(edges):
        e = np.asarray(edges, dtype=np.int64)
        adj[e[:, 0], e[:, 1]] = 1.0
        adj[e[:, 1], e[:, 0]] = 1.0
    np.fill_diagonal(adj, 0.0)
    return adj


@dataclass
class GraphSample:
    """One labelled graph.

    The adjacency is stored as ``n`` plus a sorted edge list; the dense
    matrix is rebuilt on demand.
    """

    n: int
    edges: np.ndarray
    node_features: np.ndarray
    label: int
    graph_id: int = 0
    _adj: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 1:
            raise ParameterError("a graph needs at least one node")
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if len(e):
            if e.min() < 0 or e.max() >= self.n:
                raise ShapeError(f"edge endpoint outside [0, {self.n})")
            e = np.sort(e, axis=1)
            e = e[e[:, 0] != e[:, 1]]
            e = np.unique(e, axis=0)
        self.edges = e
        self.node_features = np.asarray(self.node_features, dtype=np.float64)
        if self.node_features.ndim != 2 or self.node_features.shape[0] != self.n:
            raise ShapeError(
                f"node_features must be [{self.n}, d], got {self.node_features.shape}"
            )
        self.label = int(self.label)
        self.graph_id = int(self.graph_id)

    @classmethod
    def from_adjacency(cls, adj, node_features, label, graph_id=0) -> GraphSample:
        adj = np.asarray(adj)
        sym = np.maximum(adj, adj.T)
        return cls(adj.shape[0], edges_from_adjacency(sym), node_features, label, graph_id)

    @property
    def adjacency(self) -> np.ndarray:
        if self._adj is None:
            self._adj = adjacency_from_edges(self.n, self.edges)
        return self._adj

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    @property
    def feature_dim(self) -> int:
        return self.node_features.shape[1]

    def with_features(self, features: np.ndarray) -> GraphSample:
        return GraphSample(self.n, self.edges, features, self.label, self.graph_id)

    def permuted(self, perm: np.ndarray) -> GraphSample:
        """Relabel nodes so that new node ``k`` is old node ``perm[k]``."""
        perm = np.asarray(perm)
        inv = np.argsort(perm)
        return GraphSample(
            self.n, inv[self.edges], self.node_features[perm], self.label, self.graph_id
        )

    def same_as(self, other: GraphSample) -> bool:
        return (
            self.n == other.n
            and self.label == other.label
            and self.graph_id == other.graph_id
            and np.array_equal(self.edges, other.edges)
            and self.node_features.shape == other.node_features.shape
            and np.array_equal(self.node_features, other.node_features)
        )


@dataclass
class Dataset:
    samples: list[GraphSample]
    num_classes: int
    name: str = "dataset"

    def __post_init__(self):
        if self.num_classes < 2:
            raise ParameterError(f"a dataset needs at least 2 classes, got {self.num_classes}")
        dims = {s.feature_dim for s in self.samples}
        if len(dims) > 1:
            raise ShapeError(f"inconsistent node feature dims in dataset: {sorted(dims)}")
        for s in self.samples:
            if not 0 <= s.label < self.num_classes:
                raise ParameterError(f"label {s.label} outside [0, {self.num_classes})")

    @property
    def feature_dim(self) -> int:
        return self.samples[0].feature_dim if self.samples else 0

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    def __len__(self) -> int:
        return len(self.samples)

    def __getitem__(self, i) -> GraphSample:
        return self.samples[i]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    def same_as(self, other: Dataset) -> bool:
        return (
            self.name == other.name
            and self.num_classes == other.num_classes
            and len(self) == len(other)
            and all(a.same_as(b) for a, b in zip(self.samples, other.samples))
        )


@dataclass
class GraphBatch:
    """Disjoint union of several graphs, node rows stacked in sample order."""

    features: np.ndarray
    adjacency: BlockAdjacency
    offsets: np.ndarray
    labels: np.ndarray

    @classmethod
    def from_samples(cls, samples, normalize: bool = False) -> GraphBatch:
        samples = list(samples)
        if not samples:
            raise ParameterError("cannot batch zero graphs")
        sizes = [s.n for s in samples]
        offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        blocks = [normalized_adjacency(s.adjacency) if normalize else s.adjacency for s in samples]
        return cls(
            features=np.concatenate([s.node_features for s in samples], axis=0),
            adjacency=BlockAdjacency(blocks, offsets),
            offsets=offsets,
            labels=np.array([s.label for s in samples], dtype=np.int64),
        )

    @property
    def num_graphs(self) -> int:
        return len(self.offsets) - 1


def normalized_adjacency(adj: np.ndarray) -> np.ndarray:
    """Symmetric normalisation ``D^-1/2 A D^-1/2`` (isolated nodes stay zero)."""
    deg = adj.sum(axis=1)
    scale = np.zeros_like(deg)
    scale[deg > 0] = deg[deg > 0] ** -0.5
    return adj * scale[:, None] * scale[None, :]
