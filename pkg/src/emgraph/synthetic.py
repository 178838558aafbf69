"""Synthetic two-edge-type datasets with a planted mixing coordinate.

A frozen random teacher network labels the nodes using the graph mixed at
the planted value, so recovering that value from data is a well-posed check
for the whole training loop.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import model as M
from . import tensor as T
from .errors import ConfigError, DataError
from .factory import mix_adjacency, scalar_to_simplex
from .graphs import Graph, SparseMatrix, sparse_from_edges


@dataclass(frozen=True)
class SyntheticSpec:
    lambda_star: float = 0.7
    num_nodes: int = 300
    num_classes: int = 3
    feature_dim: int = 16
    noise: float = 0.05
    edge_prob: tuple[float, float] = (0.02, 0.02)
    teacher_hidden: int = 16
    teacher_layers: int = 2
    split: tuple[float, float, float] = (0.6, 0.2, 0.2)
    max_retries: int = 5

    def __post_init__(self):
        if self.num_nodes < 10:
            raise ConfigError("need at least 10 nodes")
        if not 0.0 <= self.lambda_star <= 1.0:
            raise ConfigError("planted value must lie in [0, 1]")
        if not 0.0 <= self.noise < 1.0:
            raise ConfigError("noise must lie in [0, 1)")
        if self.num_classes < 2:
            raise ConfigError("need at least 2 classes")
        if abs(sum(self.split) - 1.0) > 1e-9:
            raise ConfigError("split fractions must sum to 1")


def _random_adjacency(n: int, p: float, rng: np.random.Generator) -> SparseMatrix:
    upper = np.triu(rng.uniform(size=(n, n)) < p, k=1)
    i, j = np.nonzero(upper)
    return sparse_from_edges(n, list(zip(i, j)), symmetrize=True)


def split_indices(
    n: int, fractions: tuple[float, float, float], rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Seeded shuffle split into train/val/test index arrays."""
    perm = rng.permutation(n)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    return (np.sort(perm[:n_train]),
            np.sort(perm[n_train : n_train + n_val]),
            np.sort(perm[n_train + n_val :]))


def gen_synthetic(
    spec: SyntheticSpec, rng: np.random.Generator
) -> tuple[Graph, M.TaskSpec, dict]:
    """Generate (graph, task, meta).

    Labels are the argmax of a frozen random teacher run on the adjacency
    mixed at the planted value, with a fraction of labels flipped afterward.
    If any class ends up with fewer than 2% of the nodes, the draw is retried
    (bounded).  ``meta`` records the planted value, the teacher weights, and
    the clean labels.
    """
    n = spec.num_nodes
    for attempt in range(spec.max_retries):
        a1 = _random_adjacency(n, spec.edge_prob[0], rng)
        a2 = _random_adjacency(n, spec.edge_prob[1], rng)
        features = T.Tensor(rng.standard_normal((n, spec.feature_dim)))
        teacher = M.init_params(
            [spec.feature_dim] + [spec.teacher_hidden] * spec.teacher_layers,
            spec.num_classes, rng)
        mixed = mix_adjacency(scalar_to_simplex(spec.lambda_star), [a1, a2])
        planted_graph = Graph(n, [(0, mixed)], features)
        logits = M.node_logits(M.forward(spec.lambda_star, planted_graph,
                                         teacher), teacher)
        clean = np.argmax(logits.data, axis=1)
        counts = np.bincount(clean, minlength=spec.num_classes)
        if counts.min() < max(2, int(0.02 * n)):
            continue
        labels = clean.copy()
        n_flip = int(round(spec.noise * n))
        if n_flip:
            flip_at = rng.choice(n, size=n_flip, replace=False)
            shift = rng.integers(1, spec.num_classes, size=n_flip)
            labels[flip_at] = (labels[flip_at] + shift) % spec.num_classes
        train_idx, val_idx, test_idx = split_indices(n, spec.split, rng)
        task = M.TaskSpec(
            kind=M.NODE_CLASSIFICATION, labels=labels, train_idx=train_idx,
            val_idx=val_idx, test_idx=test_idx, num_classes=spec.num_classes)
        graph = Graph(n, [(0, a1), (1, a2)], features)
        meta = {
            "lambda_star": spec.lambda_star,
            "attempt": attempt,
            "teacher": teacher,
            "clean_labels": clean,
            "flipped": int(n_flip),
        }
        return graph, task, meta
    raise DataError(
        f"could not generate balanced classes in {spec.max_retries} attempts")
