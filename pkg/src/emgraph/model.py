"""The latent-parametrized GCN: per-layer weights combine a base matrix with
a lambda-scaled one, aggregation uses the graph's normalized shift operator,
and a linear head maps embeddings to logits or a scalar target.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError
from .graphs import Graph, spmm

NODE_CLASSIFICATION = "node-classification"
GRAPH_REGRESSION = "graph-regression"


@dataclass(frozen=True)
class TaskSpec:
    """Which items are supervised how: node labels on one graph, or one
    regression target per graph."""

    kind: str
    labels: np.ndarray
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray
    num_classes: int | None = None

    def __post_init__(self):
        if self.kind not in (NODE_CLASSIFICATION, GRAPH_REGRESSION):
            raise ConfigError(f"unknown task kind {self.kind!r}")
        for name in ("labels", "train_idx", "val_idx", "test_idx"):
            arr = np.asarray(getattr(self, name))
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        masks = [set(self.train_idx.tolist()), set(self.val_idx.tolist()),
                 set(self.test_idx.tolist())]
        if (masks[0] & masks[1]) or (masks[0] & masks[2]) or (masks[1] & masks[2]):
            raise ConfigError("train/val/test masks overlap")
        if self.train_idx.size == 0:
            raise ConfigError("empty train mask")
        top = max(int(m.max()) for m in
                  (self.train_idx, self.val_idx, self.test_idx) if m.size)
        if top >= self.labels.shape[0]:
            raise ConfigError("mask index beyond label rows")
        if self.kind == NODE_CLASSIFICATION and self.num_classes is None:
            raise ConfigError("node classification needs num_classes")

    def indices(self, split: str) -> np.ndarray:
        try:
            return {"train": self.train_idx, "val": self.val_idx,
                    "test": self.test_idx}[split]
        except KeyError:
            raise ConfigError(f"unknown split {split!r}") from None


@dataclass(frozen=True)
class ModelParams:
    """Per-layer (base, lambda) weight pairs plus an optional linear head.

    head=None means the last layer's output is used directly (identity head);
    the convex-loss fixtures rely on that.
    """

    layers: tuple[tuple[T.Tensor, T.Tensor], ...]
    head: T.Tensor | None = None

    def __post_init__(self):
        if not self.layers:
            raise ConfigError("model needs at least one layer")
        for k, (base, lam_w) in enumerate(self.layers):
            if base.shape != lam_w.shape:
                raise ShapeError(f"layer {k}: weight pair shapes differ")
            if k > 0 and self.layers[k - 1][0].cols != base.rows:
                raise ShapeError(f"layer {k}: width does not chain")
        if self.head is not None and self.head.rows != self.layers[-1][0].cols:
            raise ShapeError("head input width does not match last layer")

    def leaves(self) -> list[T.Tensor]:
        out: list[T.Tensor] = []
        for base, lam_w in self.layers:
            out.extend((base, lam_w))
        if self.head is not None:
            out.append(self.head)
        return out

    def replace_leaves(self, new_leaves: Sequence[T.Tensor]) -> "ModelParams":
        expected = len(self.layers) * 2 + (1 if self.head is not None else 0)
        if len(new_leaves) != expected:
            raise ShapeError("wrong number of replacement tensors")
        it = iter(new_leaves)
        layers = tuple((next(it), next(it)) for _ in self.layers)
        head = next(it) if self.head is not None else None
        return ModelParams(layers=layers, head=head)


def glorot(rows: int, cols: int, rng: np.random.Generator) -> T.Tensor:
    sd = np.sqrt(2.0 / (rows + cols))
    return T.Tensor(rng.standard_normal((rows, cols)) * sd)


def init_params(
    layer_dims: Sequence[int],
    head_dim: int | None,
    rng: np.random.Generator,
) -> ModelParams:
    """Glorot-normal weights for dims like [in, hidden, out]; the lambda
    weight of each pair uses the same scale so the latent coordinate matters
    from the first iteration."""
    if len(layer_dims) < 2:
        raise ConfigError("layer_dims needs at least input and output widths")
    layers = []
    for d_in, d_out in zip(layer_dims[:-1], layer_dims[1:]):
        layers.append((glorot(d_in, d_out, rng), glorot(d_in, d_out, rng)))
    head = None
    if head_dim is not None:
        head = glorot(layer_dims[-1], head_dim, rng)
    return ModelParams(layers=tuple(layers), head=head)


def forward(
    lam: float,
    graph: Graph,
    params: ModelParams,
    tape: T.Tape | None = None,
) -> T.Tensor:
    """Node embeddings: x_k = relu(S x_{k-1} (base_k + lam * lamW_k)), with
    no relu on the final layer."""
    shift = graph.shift(add_self_loops=True)
    x = graph.node_features
    last = len(params.layers) - 1
    for k, (base, lam_w) in enumerate(params.layers):
        w = T.add(base, T.scale(lam_w, lam, tape), tape)
        x = spmm(shift, x, tape)
        x = T.matmul(x, w, tape)
        if k != last:
            x = T.relu(x, tape)
    return x


def readout(z: T.Tensor, tape: T.Tape | None = None) -> T.Tensor:
    """Graph-level embedding: the mean over node rows."""
    if z.rows < 1:
        raise ShapeError("readout needs at least one node")
    return T.mean_rows(z, tape)


def node_logits(
    z: T.Tensor, params: ModelParams, tape: T.Tape | None = None
) -> T.Tensor:
    if params.head is None:
        return z
    return T.matmul(z, params.head, tape)


def graph_prediction(
    z: T.Tensor, params: ModelParams, tape: T.Tape | None = None
) -> T.Tensor:
    pooled = readout(z, tape)
    if params.head is None:
        return pooled
    return T.matmul(pooled, params.head, tape)


def loss(
    lam: float,
    data,
    params: ModelParams,
    task: TaskSpec,
    tape: T.Tape | None = None,
    split: str = "train",
) -> T.Tensor:
    """The task loss at one latent value.

    data is the lambda-generated Graph for node classification, or the
    aligned list of per-molecule Graphs for graph regression.  Returns a 1x1
    tensor; classification is mean cross-entropy over the split's nodes,
    regression is mean squared error over the split's graphs.
    """
    idx = task.indices(split)
    if idx.size == 0:
        raise ConfigError(f"empty {split} mask")
    if task.kind == NODE_CLASSIFICATION:
        z = forward(lam, data, params, tape)
        logits = node_logits(z, params, tape)
        return T.cross_entropy(logits, task.labels, idx, tape)
    preds = []
    for g_idx in idx:
        z = forward(lam, data[int(g_idx)], params, tape)
        preds.append(graph_prediction(z, params, tape))
    stacked = T.concat_rows(preds, tape)
    targets = np.asarray(task.labels, dtype=np.float64)[idx]
    return T.mean_squared_error(stacked, targets, tape)


def loss_and_grads(
    lam: float, data, params: ModelParams, task: TaskSpec, split: str = "train"
) -> tuple[float, list[T.Tensor]]:
    """Loss value and gradient per leaf tensor, in leaves() order."""
    leaves = params.leaves()
    value, grads = T.value_and_grad(
        lambda tape: loss(lam, data, params, task, tape, split), leaves
    )
    return value.item(), [grads[p] for p in leaves]
