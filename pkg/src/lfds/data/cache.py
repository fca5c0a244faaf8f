"""Binary dataset cache (``LFDS-DS-1``).

Layout: the magic line, one JSON header line, then per sample a little-endian
int64 record ``(graph_id, label, n, num_edges, feature_dim)`` followed by the
int64 edge array ``[num_edges, 2]`` and the float64 features ``[n, d]``.
Floats are stored as raw bytes, so a round trip is bit-exact.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from ..errors import FormatError, IngestionError
from .graph import Dataset, GraphSample

MAGIC = b"LFDS-DS-1\n"
_I64 = np.dtype("<i8")
_F64 = np.dtype("<f8")


def dataset_to_bytes(dataset: Dataset) -> bytes:
    header = {
        "name": dataset.name,
        "num_classes": dataset.num_classes,
        "feature_dim": dataset.feature_dim,
        "num_samples": len(dataset),
    }
    parts = [MAGIC, json.dumps(header, sort_keys=True).encode() + b"\n"]
    for s in dataset.samples:
        rec = np.array([s.graph_id, s.label, s.n, len(s.edges), s.feature_dim], dtype=_I64)
        parts.append(rec.tobytes())
        parts.append(np.ascontiguousarray(s.edges, dtype=_I64).tobytes())
        parts.append(np.ascontiguousarray(s.node_features, dtype=_F64).tobytes())
    return b"".join(parts)


def dataset_from_bytes(blob: bytes, source="<bytes>") -> Dataset:
    if not blob.startswith(MAGIC):
        raise FormatError("not an LFDS-DS-1 dataset cache", source)
    pos = len(MAGIC)
    end = blob.index(b"\n", pos)
    header = json.loads(blob[pos:end])
    pos = end + 1
    samples = []
    try:
        for _ in range(header["num_samples"]):
            rec = np.frombuffer(blob, dtype=_I64, count=5, offset=pos)
            pos += rec.nbytes
            gid, label, n, ne, d = (int(v) for v in rec)
            edges = np.frombuffer(blob, dtype=_I64, count=2 * ne, offset=pos).reshape(ne, 2)
            pos += edges.nbytes
            feats = np.frombuffer(blob, dtype=_F64, count=n * d, offset=pos).reshape(n, d)
            pos += feats.nbytes
            samples.append(GraphSample(n, edges.copy(), feats.copy(), label, gid))
    except ValueError as exc:
        raise FormatError(f"truncated dataset cache ({exc})", source) from None
    if pos != len(blob):
        raise FormatError(f"{len(blob) - pos} trailing bytes in dataset cache", source)
    return Dataset(samples, header["num_classes"], header["name"])


def atomic_write_bytes(path, blob: bytes) -> None:
    path = Path(path)
    directory = path.parent if str(path.parent) else Path(".")
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_dataset(dataset: Dataset, path) -> Path:
    atomic_write_bytes(path, dataset_to_bytes(dataset))
    return Path(path)


def load_dataset(path) -> Dataset:
    try:
        blob = Path(path).read_bytes()
    except FileNotFoundError:
        raise IngestionError(f"dataset cache not found: {path}") from None
    return dataset_from_bytes(blob, path)
