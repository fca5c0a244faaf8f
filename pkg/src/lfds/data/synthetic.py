"""Synthetic datasets: separable cycle/star graphs and point-cloud kNN graphs."""

from __future__ import annotations

import numpy as np

from ..errors import ParameterError
from .graph import Dataset, GraphSample, edges_from_adjacency

PC_FAMILIES = ("sphere", "plane", "two-cluster", "torus", "line", "grid", "helix", "cross")
DEGREE_BUCKETS = 8


def knn_graph(points: np.ndarray, k: int) -> np.ndarray:
    """Symmetrised (union) k-nearest-neighbour adjacency of a point cloud.

    Equal distances are broken towards the lower point index.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if k < 1 or k >= n:
        raise ParameterError(f"k must satisfy 1 <= k < n={n}, got {k}")
    if not np.all(np.isfinite(points)):
        raise ParameterError("points must be finite")
    diff = points[:, None, :] - points[None, :, :]
    dist = np.einsum("ijk,ijk->ij", diff, diff)
    np.fill_diagonal(dist, np.inf)
    nbrs = np.argsort(dist, axis=1, kind="stable")[:, :k]
    adj = np.zeros((n, n))
    adj[np.repeat(np.arange(n), k), nbrs.ravel()] = 1.0
    adj = np.maximum(adj, adj.T)
    np.fill_diagonal(adj, 0.0)
    return adj


def _sample_family(family: str, n: int, rng: np.random.Generator) -> np.ndarray:
    if family == "sphere":
        v = rng.standard_normal((n, 3))
        pts = v / np.linalg.norm(v, axis=1, keepdims=True)
    elif family == "plane":
        a = rng.uniform(0.5, 1.0)
        pts = np.column_stack([rng.uniform(-1, 1, n), rng.uniform(-a, a, n), np.zeros(n)])
    elif family == "two-cluster":
        sep = rng.uniform(1.5, 3.0)
        half = n // 2
        pts = rng.normal(scale=0.3, size=(n, 3))
        pts[:half, 0] -= sep / 2
        pts[half:, 0] += sep / 2
    elif family == "torus":
        r = rng.uniform(0.25, 0.45)
        u, v = rng.uniform(0, 2 * np.pi, (2, n))
        pts = np.column_stack(
            [(1 + r * np.cos(v)) * np.cos(u), (1 + r * np.cos(v)) * np.sin(u), r * np.sin(v)]
        )
    elif family == "line":
        pts = np.column_stack([rng.uniform(-1, 1, n), np.zeros(n), np.zeros(n)])
    elif family == "grid":
        rows = 10
        cols = int(np.ceil(n / rows))
        gx, gy = np.meshgrid(np.arange(cols), np.arange(rows))
        pts = np.column_stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)])[:n] / 7.0
        pts = pts + rng.normal(scale=0.02, size=pts.shape)
    elif family == "helix":
        c = rng.uniform(0.1, 0.3)
        t = rng.uniform(0, 4 * np.pi, n)
        pts = np.column_stack([np.cos(t), np.sin(t), c * t])
    elif family == "cross":
        half = n // 2
        pts = np.zeros((n, 3))
        pts[:half, 0] = rng.uniform(-1, 1, half)
        pts[half:, 1] = rng.uniform(-1, 1, n - half)
    else:
        raise ParameterError(f"unknown point-cloud family {family!r}")
    return pts + rng.normal(scale=0.03, size=pts.shape)


def degree_bucket_features(degrees: np.ndarray, offset: int, buckets: int = DEGREE_BUCKETS):
    idx = np.clip(np.asarray(degrees, dtype=np.int64) - offset, 0, buckets - 1)
    return np.eye(buckets)[idx]


def generate_pc_graphs(
    num_per_class: int, points_per_cloud: int = 150, k: int = 4, seed: int = 0
) -> Dataset:
    """Eight classes of noisy point clouds turned into kNN graphs.

    Node features are one-hot buckets of ``degree - k`` (the last bucket
    collects everything above).
    """
    if num_per_class < 1:
        raise ParameterError("num_per_class must be at least 1")
    rng = np.random.default_rng(seed)
    samples = []
    gid = 1
    for label, family in enumerate(PC_FAMILIES):
        for _ in range(num_per_class):
            adj = knn_graph(_sample_family(family, points_per_cloud, rng), k)
            feats = degree_bucket_features(adj.sum(axis=1), k)
            samples.append(
                GraphSample(points_per_cloud, edges_from_adjacency(adj), feats, label, gid)
            )
            gid += 1
    return Dataset(samples, len(PC_FAMILIES), name=f"pc-graphs_s{seed}")


def cycle_edges(n: int) -> np.ndarray:
    i = np.arange(n)
    return np.stack([i, (i + 1) % n], axis=1)


def star_edges(n: int) -> np.ndarray:
    return np.stack([np.zeros(n - 1, dtype=np.int64), np.arange(1, n)], axis=1)


def _degree_features(n: int, edges: np.ndarray) -> np.ndarray:
    deg = np.bincount(edges.ravel(), minlength=n).astype(np.float64)
    return np.column_stack([deg / (n - 1), np.ones(n)])


def generate_separable(num_per_class: int, seed: int = 0, n_range=(10, 20)) -> Dataset:
    """Class 0: cycle graphs, class 1: star graphs; features (degree/(n-1), 1)."""
    if num_per_class < 1:
        raise ParameterError("num_per_class must be at least 1")
    lo, hi = n_range
    rng = np.random.default_rng(seed)
    samples = []
    gid = 1
    for label, make in enumerate((cycle_edges, star_edges)):
        for _ in range(num_per_class):
            n = int(rng.integers(lo, hi + 1))
            edges = make(n)
            samples.append(GraphSample(n, edges, _degree_features(n, edges), label, gid))
            gid += 1
    return Dataset(samples, 2, name=f"separable_s{seed}")
