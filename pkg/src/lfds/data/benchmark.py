"""Reader and writer for the community graph-classification text layout.

A dataset ``NAME`` lives in one directory as::

    NAME_A.txt               one "i, j" edge per line, 1-indexed global node ids
    NAME_graph_indicator.txt line k holds the graph id of node k
    NAME_graph_labels.txt    line g holds the label of graph g
    NAME_node_labels.txt     optional, line k holds the label of node k
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from ..errors import FormatError, IngestionError
from .graph import Dataset, GraphSample


def _read_lines(path: Path) -> list[str]:
    try:
        with open(path) as fh:
            return fh.read().splitlines()
    except FileNotFoundError:
        raise IngestionError(f"missing mandatory file: {path}") from None


def _read_ints(path: Path) -> list[int]:
    values = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            values.append(int(line.split(",")[0]))
        except ValueError:
            raise FormatError(f"expected an integer, got {line!r}", path, lineno) from None
    return values


def parse_benchmark_dataset(directory, name: str) -> Dataset:
    directory = Path(directory)
    indicator = _read_ints(directory / f"{name}_graph_indicator.txt")
    graph_labels = _read_ints(directory / f"{name}_graph_labels.txt")
    edge_path = directory / f"{name}_A.txt"
    edge_lines = _read_lines(edge_path)
    node_label_path = directory / f"{name}_node_labels.txt"
    node_labels = _read_ints(node_label_path) if node_label_path.exists() else None

    num_nodes = len(indicator)
    if node_labels is not None and len(node_labels) != num_nodes:
        raise FormatError(
            f"{len(node_labels)} node labels for {num_nodes} nodes", node_label_path
        )
    graph_ids = sorted(set(indicator))
    if len(graph_ids) != len(graph_labels):
        raise FormatError(
            f"{len(graph_labels)} graph labels for {len(graph_ids)} graphs",
            directory / f"{name}_graph_labels.txt",
        )

    # local index of every global node inside its graph
    members: dict[int, list[int]] = {g: [] for g in graph_ids}
    local = np.empty(num_nodes, dtype=np.int64)
    for node, g in enumerate(indicator):
        local[node] = len(members[g])
        members[g].append(node)

    edges: dict[int, list[tuple[int, int]]] = {g: [] for g in graph_ids}
    for lineno, line in enumerate(edge_lines, start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        try:
            i, j = int(parts[0]) - 1, int(parts[1]) - 1
        except (ValueError, IndexError):
            raise FormatError(f"expected 'i, j', got {line!r}", edge_path, lineno) from None
        if not (0 <= i < num_nodes and 0 <= j < num_nodes):
            raise FormatError(f"node id out of range in {line!r}", edge_path, lineno)
        if indicator[i] != indicator[j]:
            raise FormatError(
                f"edge {line!r} joins graphs {indicator[i]} and {indicator[j]}", edge_path, lineno
            )
        edges[indicator[i]].append((int(local[i]), int(local[j])))

    label_values = sorted(set(graph_labels))
    label_map = {v: k for k, v in enumerate(label_values)}
    if node_labels is not None:
        node_values = sorted(set(node_labels))
        node_map = {v: k for k, v in enumerate(node_values)}
        onehot = np.eye(len(node_values))[[node_map[v] for v in node_labels]]
    else:
        onehot = np.ones((num_nodes, 1))

    samples = []
    for g, glabel in zip(graph_ids, graph_labels):
        nodes = members[g]
        samples.append(
            GraphSample(
                n=len(nodes),
                edges=np.array(edges[g], dtype=np.int64).reshape(-1, 2),
                node_features=onehot[nodes],
                label=label_map[glabel],
                graph_id=g,
            )
        )
    return Dataset(samples, num_classes=max(len(label_values), 2), name=name)


def write_benchmark_dataset(dataset: Dataset, directory, name: str | None = None) -> Path:
    """Write ``dataset`` in the text layout.

    Node features must be one-hot rows (written as node labels) or a single
    constant column (no node label file).
    """
    name = name or dataset.name
    directory = Path(directory)
    os.makedirs(directory, exist_ok=True)
    feats = [s.node_features for s in dataset.samples]
    constant = all(f.shape[1] == 1 and np.all(f == 1.0) for f in feats)
    if not constant:
        for f in feats:
            if not (np.all((f == 0) | (f == 1)) and np.all(f.sum(axis=1) == 1)):
                raise FormatError("node features are not one-hot; cannot write node labels")

    a_lines, ind_lines, node_lines, label_lines = [], [], [], []
    base = 0
    for s in dataset.samples:
        for i, j in s.edges:
            a_lines.append(f"{base + i + 1}, {base + j + 1}")
            a_lines.append(f"{base + j + 1}, {base + i + 1}")
        ind_lines.extend([str(s.graph_id)] * s.n)
        if not constant:
            node_lines.extend(str(v) for v in np.argmax(s.node_features, axis=1))
        label_lines.append(str(s.label))
        base += s.n

    def dump(suffix, lines):
        with open(directory / f"{name}_{suffix}.txt", "w") as fh:
            fh.write("\n".join(lines) + ("\n" if lines else ""))

    dump("A", a_lines)
    dump("graph_indicator", ind_lines)
    dump("graph_labels", label_lines)
    if not constant:
        dump("node_labels", node_lines)
    return directory
