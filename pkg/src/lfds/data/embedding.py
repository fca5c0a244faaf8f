"""Random-walk node embeddings via PPMI factorisation of walk co-occurrences.

The default ``method="expected"`` uses the exact expected co-occurrence
counts of the truncated walks (computed from powers of the transition
matrix), so the result does not depend on sampling and relabelling the
nodes relabels the embedding rows.  ``method="sampled"`` runs seeded walks.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import ParameterError
from .graph import Dataset, GraphSample

EMBED_DIM = 12


def walk_length(s: int) -> int:
    """``max(4, min(s / 10, 10))`` rounded down."""
    if s < 1:
        raise ParameterError(f"graph size must be >= 1, got {s}")
    return int(math.floor(max(4.0, min(s / 10.0, 10.0))))


def _transition(adj: np.ndarray) -> np.ndarray:
    deg = adj.sum(axis=1)
    P = np.zeros_like(adj)
    nz = deg > 0
    P[nz] = adj[nz] / deg[nz, None]
    return P


def expected_cooccurrence(adj: np.ndarray, length: int, window: int, walks_per_node: int = 1):
    """Expected symmetric skip-gram pair counts for walks started at every node."""
    n = adj.shape[0]
    P = _transition(adj)
    powers = [np.eye(n)]
    for _ in range(length - 1):
        powers.append(powers[-1] @ P)
    C = np.zeros((n, n))
    for t in range(length):
        mass = powers[t].sum(axis=0)  # expected walkers at each node at step t
        for r in range(1, min(window, length - 1 - t) + 1):
            C += mass[:, None] * powers[r]
    C = walks_per_node * C
    return C + C.T


def sampled_cooccurrence(
    adj: np.ndarray, length: int, window: int, walks_per_node: int, rng: np.random.Generator
):
    n = adj.shape[0]
    nbrs = [np.flatnonzero(adj[i]) for i in range(n)]
    C = np.zeros((n, n))
    for _ in range(walks_per_node):
        for start in range(n):
            walk = [start]
            while len(walk) < length and len(nbrs[walk[-1]]):
                walk.append(int(rng.choice(nbrs[walk[-1]])))
            for t, u in enumerate(walk):
                for v in walk[t + 1 : t + 1 + window]:
                    C[u, v] += 1.0
                    C[v, u] += 1.0
    return C


def ppmi(C: np.ndarray, shift: float = 1.0) -> np.ndarray:
    total = C.sum()
    if total <= 0:
        return np.zeros_like(C)
    row = C.sum(axis=1)
    col = C.sum(axis=0)
    out = np.zeros_like(C)
    nz = C > 0
    denom = np.outer(row, col)
    out[nz] = np.log(C[nz] * total / denom[nz]) - np.log(shift)
    return np.maximum(out, 0.0)


def _fix_signs(V: np.ndarray) -> np.ndarray:
    # a relabelling-invariant sign convention: positive column sum, else positive largest entry
    for j in range(V.shape[1]):
        col = V[:, j]
        s = col.sum()
        if abs(s) > 1e-9:
            sign = np.sign(s)
        else:
            sign = np.sign(col[np.argmax(np.abs(col))]) or 1.0
        V[:, j] = col * sign
    return V


def embed_nodes(
    sample: GraphSample,
    dim: int = EMBED_DIM,
    walks_per_node: int = 10,
    window: int = 5,
    seed: int = 0,
    method: str = "expected",
) -> np.ndarray:
    n = sample.n
    if n == 1:
        return np.zeros((1, dim))
    length = walk_length(n)
    adj = sample.adjacency
    if method == "expected":
        C = expected_cooccurrence(adj, length, window, walks_per_node)
    elif method == "sampled":
        C = sampled_cooccurrence(adj, length, window, walks_per_node, np.random.default_rng(seed))
    else:
        raise ParameterError(f"unknown embedding method {method!r}")
    M = ppmi(C)
    vals, vecs = np.linalg.eigh(M)
    order = np.argsort(-vals, kind="stable")
    keep = [i for i in order[:dim] if vals[i] > 1e-10]
    out = np.zeros((n, dim))
    if keep:
        V = _fix_signs(vecs[:, keep] * np.sqrt(vals[keep]))
        out[:, : len(keep)] = V
    return out


def embed_dataset(
    dataset: Dataset,
    dim: int = EMBED_DIM,
    walks_per_node: int = 10,
    window: int = 5,
    seed: int = 0,
    method: str = "expected",
) -> Dataset:
    """Append ``dim`` embedding columns to every sample's node features."""
    samples = []
    for i, s in enumerate(dataset.samples):
        emb = embed_nodes(s, dim, walks_per_node, window, seed + i, method)
        samples.append(s.with_features(np.concatenate([s.node_features, emb], axis=1)))
    return Dataset(samples, dataset.num_classes, dataset.name)
