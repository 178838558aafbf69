"""Line-oriented dataset formats.

Edge lists:      one edge per line, ``src<TAB>dst<TAB>edge_type_id``,
                 0-indexed node ids; both directions of a pair share a type
                 id and the loader symmetrizes, summing duplicates.
Features/labels: one row of whitespace-separated floats / one integer label
                 per node line.
Coordinates:     per-molecule blocks, an atom count line, then that many
                 lines of ``element x y z`` (angstrom).
Targets:         one float per molecule line.
Metrics:         CSV with header ``iteration,train_loss,val_metric,test_metric``.
"""
from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from . import model as M
from . import tensor as T
from .errors import DataError
from .factory import CoordinateSet
from .graphs import Graph, SparseMatrix, sparse_from_edges
from .synthetic import split_indices

METRICS_HEADER = ("iteration", "train_loss", "val_metric", "test_metric")


def _lines(path) -> list[str]:
    try:
        return Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def load_edge_list(path, num_nodes: int) -> list[tuple[int, SparseMatrix]]:
    """Parse a typed edge list into one symmetric adjacency per type id."""
    by_type: dict[int, list[tuple[int, int]]] = {}
    for lineno, line in enumerate(_lines(path), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise DataError(f"{path}:{lineno}: expected src<TAB>dst<TAB>type")
        try:
            src, dst, type_id = (int(p) for p in parts)
        except ValueError:
            raise DataError(f"{path}:{lineno}: non-integer field") from None
        if type_id < 0:
            raise DataError(f"{path}:{lineno}: unknown edge type {type_id}")
        if not (0 <= src < num_nodes and 0 <= dst < num_nodes):
            raise DataError(f"{path}:{lineno}: node index out of range")
        if src == dst:
            raise DataError(f"{path}:{lineno}: self-loop not allowed")
        by_type.setdefault(type_id, []).append((src, dst))
    return [
        (tid, sparse_from_edges(num_nodes, pairs, symmetrize=True))
        for tid, pairs in sorted(by_type.items())
    ]


def write_edge_list(graph: Graph, path) -> None:
    """Inverse of load_edge_list: each undirected edge written once (upper
    triangle), repeated per unit of weight."""
    with open(path, "w", encoding="utf-8") as fh:
        for tid, adj in graph.edge_layers:
            for r, c, v in zip(adj.rows, adj.cols, adj.vals):
                if r >= c:
                    continue
                reps = int(round(v))
                if abs(v - reps) > 1e-9:
                    raise DataError("edge list format requires integer weights")
                for _ in range(reps):
                    fh.write(f"{r}\t{c}\t{tid}\n")


def _parse_matrix(path) -> np.ndarray:
    rows = []
    width = None
    for lineno, line in enumerate(_lines(path), start=1):
        if not line.strip():
            continue
        try:
            row = [float(tok) for tok in line.split()]
        except ValueError:
            raise DataError(f"{path}:{lineno}: non-numeric value") from None
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise DataError(f"{path}:{lineno}: ragged row")
        rows.append(row)
    if not rows:
        raise DataError(f"{path}: empty matrix file")
    return np.array(rows)


def load_hetero(
    edge_path,
    feature_path,
    label_path,
    split=(0.6, 0.2, 0.2),
    split_seed: int = 0,
) -> tuple[Graph, M.TaskSpec]:
    """Load a typed-edge node-classification dataset.

    Features and labels are row-indexed by node; the node count is the
    feature row count.  Masks come from a seeded shuffle split.
    """
    features = _parse_matrix(feature_path)
    num_nodes = features.shape[0]
    labels = []
    for lineno, line in enumerate(_lines(label_path), start=1):
        if not line.strip():
            continue
        try:
            labels.append(int(line.strip()))
        except ValueError:
            raise DataError(f"{label_path}:{lineno}: non-integer label") from None
    if len(labels) != num_nodes:
        raise DataError(
            f"{label_path}: {len(labels)} labels for {num_nodes} feature rows")
    layers = load_edge_list(edge_path, num_nodes)
    graph = Graph(num_nodes, layers, T.Tensor(features))
    rng = np.random.default_rng(split_seed)
    train_idx, val_idx, test_idx = split_indices(num_nodes, tuple(split), rng)
    y = np.asarray(labels, dtype=np.int64)
    if y.min() < 0:
        raise DataError(f"{label_path}: negative class id")
    task = M.TaskSpec(
        kind=M.NODE_CLASSIFICATION, labels=y, train_idx=train_idx,
        val_idx=val_idx, test_idx=test_idx, num_classes=int(y.max()) + 1)
    return graph, task


def load_molecular(
    coord_path,
    target_path,
    split=(0.6, 0.2, 0.2),
    split_seed: int = 0,
) -> tuple[list[CoordinateSet], M.TaskSpec]:
    """Load per-molecule coordinate blocks and one regression target per
    molecule; atom features are one-hot element indicators (element order
    sorted for determinism)."""
    lines = [ln for ln in _lines(coord_path)]
    blocks: list[list[tuple[str, float, float, float]]] = []
    i = 0
    mol_index = 0
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        try:
            count = int(lines[i].strip())
        except ValueError:
            raise DataError(
                f"{coord_path}: molecule {mol_index}: bad atom count line"
            ) from None
        if count < 1:
            raise DataError(f"{coord_path}: molecule {mol_index}: empty block")
        atoms = []
        for j in range(i + 1, i + 1 + count):
            if j >= len(lines):
                raise DataError(
                    f"{coord_path}: molecule {mol_index}: truncated block")
            parts = lines[j].split()
            if len(parts) != 4:
                raise DataError(
                    f"{coord_path}: molecule {mol_index}: expected 'element x y z'")
            try:
                atoms.append((parts[0], float(parts[1]), float(parts[2]),
                              float(parts[3])))
            except ValueError:
                raise DataError(
                    f"{coord_path}: molecule {mol_index}: bad coordinate") from None
        blocks.append(atoms)
        i += 1 + count
        mol_index += 1
    if not blocks:
        raise DataError(f"{coord_path}: no molecules")

    elements = sorted({el for block in blocks for el, *_ in block})
    el_index = {el: k for k, el in enumerate(elements)}
    molecules = []
    for block in blocks:
        pos = np.array([[x, y, z] for _, x, y, z in block])
        feats = np.zeros((len(block), len(elements)))
        for row, (el, *_), in enumerate(block):
            feats[row, el_index[el]] = 1.0
        molecules.append(CoordinateSet(pos, T.Tensor(feats)))

    targets = []
    for lineno, line in enumerate(_lines(target_path), start=1):
        if not line.strip():
            continue
        try:
            targets.append(float(line.strip()))
        except ValueError:
            raise DataError(f"{target_path}:{lineno}: non-numeric target") from None
    if len(targets) != len(molecules):
        raise DataError(
            f"{target_path}: {len(targets)} targets for {len(molecules)} molecules")

    rng = np.random.default_rng(split_seed)
    train_idx, val_idx, test_idx = split_indices(len(molecules), tuple(split), rng)
    task = M.TaskSpec(
        kind=M.GRAPH_REGRESSION, labels=np.asarray(targets, dtype=np.float64),
        train_idx=train_idx, val_idx=val_idx, test_idx=test_idx)
    return molecules, task


def write_metrics_csv(history, sink) -> None:
    """Per-iteration metric rows in a stable, reproducible format."""
    own = not hasattr(sink, "write")
    fh = open(sink, "w", encoding="utf-8", newline="") if own else sink
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRICS_HEADER)
        for rec in history:
            writer.writerow([rec.iteration, repr(rec.train_loss),
                             repr(rec.val_metric), repr(rec.test_metric)])
    finally:
        if own:
            fh.close()


def metrics_csv_text(history) -> str:
    buf = io.StringIO()
    write_metrics_csv(history, buf)
    return buf.getvalue()
