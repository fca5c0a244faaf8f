"""End-to-end graph classifier: backbone, optional LFDS head, 3-layer MLP."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import functional as F
from .backbone import as_batch, backbone_forward, init_backbone
from .errors import ParameterError, ShapeError
from .heads import HeadConfig, LfdsKind, head_forward, head_penalty, init_head
from .optim import glorot_uniform
from .tensor import Tensor

MAXPOOL = "maxpool"


@dataclass
class ModelConfig:
    in_dim: int
    num_classes: int
    head: str = "image"  # an LfdsKind value or "maxpool"
    m: int = 16
    hidden: int = 64
    num_layers: int = 3
    classifier_hidden: int = 128
    dropout_hidden: float = 0.5
    dropout_node: float = 0.2
    dropout_element: float = 0.4
    lam: float = 1e-3
    fuse: bool = True
    normalize_adjacency: bool = False

    def __post_init__(self):
        if self.head != MAXPOOL:
            self.head = LfdsKind.parse(self.head).value
        for name in ("dropout_hidden", "dropout_node", "dropout_element"):
            p = getattr(self, name)
            if not 0.0 <= p < 1.0:
                raise ParameterError(f"{name} must be in [0, 1), got {p}")

    @property
    def head_config(self) -> HeadConfig | None:
        if self.head == MAXPOOL:
            return None
        return HeadConfig(
            self.head, self.m, self.hidden, self.dropout_element, self.lam, self.fuse
        )

    @property
    def representation_dim(self) -> int:
        base = self.hidden * self.num_layers
        return base if self.head == MAXPOOL else base + 2 * self.hidden

    def to_dict(self) -> dict:
        return asdict(self)


def classifier_forward(final: Tensor, params, mode: str = F.EVAL, p: float = 0.5, rng=None):
    """affine, ReLU, dropout, affine, ReLU, dropout, affine."""
    w0 = params["classifier.fc0.weight"]
    if final.shape[-1] != w0.shape[0]:
        raise ShapeError(f"classifier expects width {w0.shape[0]}, got {final.shape}")
    h = final
    for k in range(2):
        h = h @ params[f"classifier.fc{k}.weight"] + params[f"classifier.fc{k}.bias"]
        h = F.dropout(F.relu(h), p, mode, rng)
    return h @ params["classifier.fc2.weight"] + params["classifier.fc2.bias"]


def init_classifier(rng, in_dim: int, hidden: int, num_classes: int):
    params = {}
    dims = [in_dim, hidden, hidden, num_classes]
    for k in range(3):
        params[f"classifier.fc{k}.weight"] = Tensor(
            glorot_uniform(rng, dims[k], dims[k + 1]), requires_grad=True
        )
        params[f"classifier.fc{k}.bias"] = Tensor(np.zeros(dims[k + 1]), requires_grad=True)
    return params


class Model:
    def __init__(self, config: ModelConfig, params=None, bn=None, seed: int = 0):
        self.config = config
        if params is None:
            params, bn = self._init(np.random.default_rng(seed))
        self.params: dict[str, Tensor] = params
        self.bn: dict[str, F.BatchNormState] = bn

    def _init(self, rng):
        c = self.config
        params, bn = init_backbone(rng, c.in_dim, c.hidden, c.num_layers)
        hc = c.head_config
        if hc is not None:
            hp, hb = init_head(rng, hc)
            params.update(hp)
            bn.update(hb)
        params.update(init_classifier(rng, c.representation_dim, c.classifier_hidden, c.num_classes))
        return params, bn

    def representation(self, graphs, mode: str = F.EVAL, rng=None) -> Tensor:
        c = self.config
        batch = as_batch(graphs, normalize=c.normalize_adjacency)
        bout = backbone_forward(batch, self.params, self.bn, mode, rng, c.dropout_node, c.num_layers)
        hc = c.head_config
        if hc is None:
            return bout.x_max
        return head_forward(bout, self.params, self.bn, hc, mode, rng).final

    def forward(self, graphs, mode: str = F.EVAL, rng=None) -> Tensor:
        final = self.representation(graphs, mode, rng)
        return classifier_forward(final, self.params, mode, self.config.dropout_hidden, rng)

    def penalty(self) -> Tensor | None:
        hc = self.config.head_config
        return None if hc is None else head_penalty(self.params, hc)

    def loss(self, graphs, mode: str = F.TRAIN, rng=None):
        """Return ``(total_loss, logits)`` for a batch."""
        batch = as_batch(graphs, normalize=self.config.normalize_adjacency)
        logits = self.forward(batch, mode, rng)
        return total_loss(logits, batch.labels, self), logits

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.params.values()))


def total_loss(logits: Tensor, labels, model: Model) -> Tensor:
    """Cross entropy plus the orthonormality penalty for the spectral head."""
    loss = F.cross_entropy(logits, labels)
    pen = model.penalty()
    return loss if pen is None else loss + pen
