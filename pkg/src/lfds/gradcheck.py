"""Central finite-difference checks of the autodiff gradients."""

from __future__ import annotations

from collections import OrderedDict
from typing import Callable, Mapping

import numpy as np

from . import functional as F
from .data.graph import GraphSample
from .heads import ALL_KINDS, LfdsKind
from .model import Model, ModelConfig
from .tensor import Tensor, backward

DEFAULT_STEP = 1e-5
DENOM_FLOOR = 1e-8


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = DENOM_FLOOR):
    """Elementwise ``|a - n| / max(|a|, |n|, floor)``."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def tensor_relative_error(analytic, numeric, floor: float = DENOM_FLOOR) -> float:
    """``||a - n|| / max(||a||, ||n||, floor)`` over a whole parameter tensor."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    return float(np.linalg.norm(a - n) / max(np.linalg.norm(a), np.linalg.norm(n), floor))


def numerical_grad(f: Callable[[], float], t: Tensor, h: float = DEFAULT_STEP) -> np.ndarray:
    """Central differences of the scalar ``f()`` with respect to every entry of ``t``."""
    grad = np.zeros_like(t.data)
    flat = t.data.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        out[i] = (fp - fm) / (2 * h)
    return grad


def check_gradients(
    loss_fn: Callable[[], Tensor],
    params: Mapping[str, Tensor],
    h: float = DEFAULT_STEP,
    metric: str = "tensor",
) -> "OrderedDict[str, float]":
    """Relative error per named parameter between backprop and finite differences.

    ``metric="elementwise"`` gives the max over entries of
    :func:`relative_error`; ``metric="tensor"`` the norm-wise
    :func:`tensor_relative_error`, which stays meaningful when some entries
    of a gradient are at the round-off level of the difference quotient.
    ``loss_fn`` must be deterministic: it is evaluated twice per scalar entry.
    """
    if metric not in ("tensor", "elementwise"):
        raise ValueError(f"unknown metric {metric!r}")
    for p in params.values():
        p.grad = None
    loss = loss_fn()
    backward(loss)
    analytic = {k: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data)) for k, p in params.items()}

    def scalar():
        return float(loss_fn().data)

    errors = OrderedDict()
    for name, p in params.items():
        num = numerical_grad(scalar, p, h)
        if not p.size:
            errors[name] = 0.0
        elif metric == "tensor":
            errors[name] = tensor_relative_error(analytic[name], num)
        else:
            errors[name] = float(relative_error(analytic[name], num).max())
    return errors


def random_graph(n: int, in_dim: int, rng: np.random.Generator, p_edge: float = 0.5, label: int = 0):
    """Connected random graph: a random spanning path plus extra random edges."""
    order = rng.permutation(n)
    edges = {tuple(sorted((int(order[i]), int(order[i + 1])))) for i in range(n - 1)}
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p_edge:
                edges.add((i, j))
    edges = np.array(sorted(edges), dtype=np.int64).reshape(-1, 2)
    return GraphSample(n, edges, rng.standard_normal((n, in_dim)), label)


def group_of(name: str) -> str:
    """Parameter group used in reports, e.g. ``head.layer0.phi1 -> head.latent-phi``."""
    parts = name.split(".")
    if parts[0] == "backbone":
        return "backbone." + ("bn" if "bn" in parts else parts[-1])
    if parts[0] == "classifier":
        return "classifier"
    leaf = parts[-1]
    if "bn" in parts:
        return "head.bn"
    if leaf.startswith("phi"):
        return "head.latent-phi"
    return f"head.{leaf}"


def model_gradcheck(
    kind,
    seed: int = 0,
    n: int = 6,
    in_dim: int = 5,
    hidden: int = 8,
    classifier_hidden: int = 16,
    m: int = 4,
    num_classes: int = 3,
    mode: str = F.TRAIN,
    metric: str = "tensor",
):
    """Gradient-check every parameter of a small model on an ``n``-node graph.

    Train mode is used with a freshly seeded rng for every evaluation, so the
    dropout masks are identical across the finite-difference evaluations and
    batch-norm runs on batch statistics.
    """
    rng = np.random.default_rng(seed)
    graph = random_graph(n, in_dim, rng, label=int(rng.integers(num_classes)))
    cfg = ModelConfig(
        in_dim=in_dim,
        num_classes=num_classes,
        head=kind if kind == "maxpool" else LfdsKind.parse(kind).value,
        m=m,
        hidden=hidden,
        classifier_hidden=classifier_hidden,
    )
    model = Model(cfg, seed=seed + 1)
    if cfg.head == LfdsKind.PARAM_SPECTRAL.value:
        # move U off the orthonormal manifold so the penalty gradient is exercised
        u = model.params["head.U"]
        u.data = u.data + 0.1 * rng.standard_normal(u.shape)

    def loss_fn():
        loss, _ = model.loss([graph], mode, np.random.default_rng(seed + 2))
        return loss

    return check_gradients(loss_fn, model.params, metric=metric)


def grouped(errors: Mapping[str, float]) -> "OrderedDict[str, float]":
    out: OrderedDict[str, float] = OrderedDict()
    for name, err in errors.items():
        g = group_of(name)
        out[g] = max(out.get(g, 0.0), err)
    return out


def kinds_from_flag(flag: str):
    if flag == "all":
        return [k.value for k in ALL_KINDS]
    return [LfdsKind.parse(flag).value]
