"""Model checkpoints (``LFDS-CKPT-1``).

Layout: the magic line, one JSON header line (model config, tensor names and
shapes, batch-norm buffer names), then the raw little-endian float64 data of
every tensor in header order.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import functional as F
from .data.cache import atomic_write_bytes
from .errors import FormatError, IngestionError
from .model import Model, ModelConfig
from .tensor import Tensor

MAGIC = b"LFDS-CKPT-1\n"
_F64 = np.dtype("<f8")


def model_to_bytes(model: Model, extra: dict | None = None) -> bytes:
    names = list(model.params)
    bn_names = list(model.bn)
    header = {
        "config": model.config.to_dict(),
        "head": model.config.head,
        "m": model.config.head_config.m if model.config.head_config else None,
        "tensors": [[k, list(model.params[k].shape)] for k in names],
        "bn": [[k, model.bn[k].num_features] for k in bn_names],
        "extra": extra or {},
    }
    parts = [MAGIC, json.dumps(header, sort_keys=True).encode() + b"\n"]
    for k in names:
        parts.append(np.ascontiguousarray(model.params[k].data, dtype=_F64).tobytes())
    for k in bn_names:
        st = model.bn[k]
        parts.append(np.ascontiguousarray(st.running_mean, dtype=_F64).tobytes())
        parts.append(np.ascontiguousarray(st.running_var, dtype=_F64).tobytes())
    return b"".join(parts)


def model_from_bytes(blob: bytes, source="<bytes>"):
    """Return ``(model, extra)``."""
    if not blob.startswith(MAGIC):
        raise FormatError("not an LFDS-CKPT-1 checkpoint", source)
    pos = len(MAGIC)
    end = blob.index(b"\n", pos)
    header = json.loads(blob[pos:end])
    pos = end + 1

    def take(shape):
        nonlocal pos
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype=_F64, count=count, offset=pos).reshape(shape)
        pos += arr.nbytes
        return arr.copy()

    try:
        params = {k: Tensor(take(tuple(shape)), requires_grad=True) for k, shape in header["tensors"]}
        bn = {}
        for k, d in header["bn"]:
            st = F.BatchNormState(d)
            st.running_mean = take((d,))
            st.running_var = take((d,))
            bn[k] = st
    except ValueError as exc:
        raise FormatError(f"truncated checkpoint ({exc})", source) from None
    if pos != len(blob):
        raise FormatError(f"{len(blob) - pos} trailing bytes in checkpoint", source)
    model = Model(ModelConfig(**header["config"]), params=params, bn=bn)
    return model, header.get("extra", {})


def save_checkpoint(model: Model, path, extra: dict | None = None) -> Path:
    atomic_write_bytes(path, model_to_bytes(model, extra))
    return Path(path)


def load_checkpoint(path):
    path = Path(path)
    try:
        blob = path.read_bytes()
    except FileNotFoundError:
        raise IngestionError(f"checkpoint not found: {path}") from None
    return model_from_bytes(blob, path)
