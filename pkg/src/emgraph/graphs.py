"""Typed sparse graphs, GCN shift operators, and the tape-recorded
sparse-dense product used by message passing.

Sparse storage is coordinate triplets sorted by (row, col) with duplicates
summed, so iteration order (and therefore floating-point accumulation order)
is reproducible run to run.
"""
from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import DataError, ShapeError

Array = np.ndarray


class SparseMatrix:
    """COO matrix with sorted, deduplicated triplets; explicit zeros are
    dropped.  Sign constraints are enforced by the consumers (Graph,
    normalized_shift), not here."""

    __slots__ = ("shape", "rows", "cols", "vals")

    def __init__(self, shape: tuple[int, int], rows, cols, vals):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if not (rows.shape == cols.shape == vals.shape):
            raise ShapeError("sparse triplet arrays must have equal length")
        if rows.size and (rows.min() < 0 or rows.max() >= shape[0]):
            raise DataError("sparse row index out of range")
        if cols.size and (cols.min() < 0 or cols.max() >= shape[1]):
            raise DataError("sparse col index out of range")
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if rows.size:
            key = rows * shape[1] + cols
            uniq, inverse = np.unique(key, return_inverse=True)
            summed = np.zeros(uniq.size)
            np.add.at(summed, inverse, vals)
            rows = (uniq // shape[1]).astype(np.int64)
            cols = (uniq % shape[1]).astype(np.int64)
            vals = summed
            keep = vals != 0.0
            rows, cols, vals = rows[keep], cols[keep], vals[keep]
        self.shape = (int(shape[0]), int(shape[1]))
        self.rows = rows
        self.cols = cols
        self.vals = vals
        for a in (self.rows, self.cols, self.vals):
            a.flags.writeable = False

    @property
    def nnz(self) -> int:
        return int(self.vals.size)

    def to_dense(self) -> Array:
        dense = np.zeros(self.shape)
        dense[self.rows, self.cols] = self.vals
        return dense

    def matmul_dense(self, x: Array) -> Array:
        if x.shape[0] != self.shape[1]:
            raise ShapeError(
                f"sparse-dense product: {self.shape} x {x.shape} do not conform"
            )
        out = np.zeros((self.shape[0], x.shape[1]))
        np.add.at(out, self.rows, self.vals[:, None] * x[self.cols])
        return out

    def transpose(self) -> SparseMatrix:
        return SparseMatrix((self.shape[1], self.shape[0]), self.cols, self.rows, self.vals)

    def is_symmetric(self, tol: float = 0.0) -> bool:
        t = self.transpose()
        if t.nnz != self.nnz:
            return False
        return (
            np.array_equal(t.rows, self.rows)
            and np.array_equal(t.cols, self.cols)
            and bool(np.all(np.abs(t.vals - self.vals) <= tol))
        )

    def diagonal(self) -> Array:
        n = min(self.shape)
        diag = np.zeros(n)
        on_diag = self.rows == self.cols
        diag[self.rows[on_diag]] = self.vals[on_diag]
        return diag

    def scaled(self, factor: float) -> SparseMatrix:
        return SparseMatrix(self.shape, self.rows, self.cols, self.vals * factor)

    def __add__(self, other: SparseMatrix) -> SparseMatrix:
        if self.shape != other.shape:
            raise ShapeError("sparse add: shapes differ")
        return SparseMatrix(
            self.shape,
            np.concatenate([self.rows, other.rows]),
            np.concatenate([self.cols, other.cols]),
            np.concatenate([self.vals, other.vals]),
        )


def sparse_from_edges(
    num_nodes: int, edges, weights=None, symmetrize: bool = False
) -> SparseMatrix:
    """Build an adjacency from (src, dst) pairs; duplicates sum.

    With ``symmetrize`` each pair contributes both (src, dst) and (dst, src).
    """
    edges = list(edges)
    if not edges:
        return SparseMatrix((num_nodes, num_nodes), [], [], [])
    rows = np.array([e[0] for e in edges], dtype=np.int64)
    cols = np.array([e[1] for e in edges], dtype=np.int64)
    if weights is None:
        vals = np.ones(rows.size)
    else:
        vals = np.asarray(weights, dtype=np.float64)
    if symmetrize:
        rows, cols, vals = (
            np.concatenate([rows, cols]),
            np.concatenate([cols, rows]),
            np.concatenate([vals, vals]),
        )
    return SparseMatrix((num_nodes, num_nodes), rows, cols, vals)


class Graph:
    """A node set with one symmetric weighted adjacency per edge type.

    Adjacencies keep a zero diagonal; self-loops only enter when the shift
    operator is built.  Instances are immutable and safe to share.
    """

    __slots__ = ("num_nodes", "edge_layers", "node_features", "_shift_cache")

    def __init__(
        self,
        num_nodes: int,
        edge_layers: list[tuple[int, SparseMatrix]],
        node_features: T.Tensor,
    ):
        if node_features.rows != num_nodes:
            raise ShapeError(
                f"feature rows {node_features.rows} != num_nodes {num_nodes}"
            )
        for type_id, adj in edge_layers:
            if adj.shape != (num_nodes, num_nodes):
                raise ShapeError(f"edge layer {type_id}: wrong shape {adj.shape}")
            if adj.vals.size and adj.vals.min() < 0:
                raise DataError(f"edge layer {type_id}: negative edge weight")
            if np.any(adj.diagonal() != 0.0):
                raise DataError(f"edge layer {type_id}: self-loop in adjacency")
            if not adj.is_symmetric():
                raise DataError(f"edge layer {type_id}: adjacency not symmetric")
        self.num_nodes = int(num_nodes)
        self.edge_layers = list(edge_layers)
        self.node_features = node_features
        self._shift_cache: dict[bool, ShiftOperator] = {}

    def layer(self, type_id: int) -> SparseMatrix:
        for tid, adj in self.edge_layers:
            if tid == type_id:
                return adj
        raise KeyError(f"no edge layer with type id {type_id}")

    def union_adjacency(self) -> SparseMatrix:
        """Sum of all typed adjacencies — the observed graph with its native
        edge weights."""
        total = SparseMatrix((self.num_nodes, self.num_nodes), [], [], [])
        for _, adj in self.edge_layers:
            total = total + adj
        return total

    def shift(self, add_self_loops: bool = True) -> "ShiftOperator":
        cached = self._shift_cache.get(add_self_loops)
        if cached is None:
            cached = normalized_shift(self.union_adjacency(), add_self_loops)
            self._shift_cache[add_self_loops] = cached
        return cached


class ShiftOperator:
    """Symmetric normalized adjacency; every entry has magnitude <= 1."""

    __slots__ = ("matrix",)

    def __init__(self, matrix: SparseMatrix):
        self.matrix = matrix

    @property
    def num_nodes(self) -> int:
        return self.matrix.shape[0]


def normalized_shift(adj: SparseMatrix, add_self_loops: bool = True) -> ShiftOperator:
    """GCN normalization D^{-1/2} (A + I) D^{-1/2} of a symmetric,
    non-negative adjacency.  Rows with zero degree are left all-zero."""
    if adj.shape[0] != adj.shape[1]:
        raise ShapeError("shift operator needs a square adjacency")
    if adj.vals.size and adj.vals.min() < 0:
        raise DataError("negative weight in adjacency")
    if not adj.is_symmetric():
        raise DataError("adjacency must be symmetric")
    n = adj.shape[0]
    if add_self_loops:
        loops = SparseMatrix((n, n), np.arange(n), np.arange(n), np.ones(n))
        adj = adj + loops
    deg = np.zeros(n)
    np.add.at(deg, adj.rows, adj.vals)
    inv_sqrt = np.zeros(n)
    positive = deg > 0
    inv_sqrt[positive] = 1.0 / np.sqrt(deg[positive])
    vals = inv_sqrt[adj.rows] * adj.vals * inv_sqrt[adj.cols]
    return ShiftOperator(SparseMatrix((n, n), adj.rows, adj.cols, vals))


def spmm(shift: ShiftOperator, x: T.Tensor, tape: T.Tape | None = None) -> T.Tensor:
    """Tape-recorded sparse-dense product S @ X; gradient w.r.t. X is S^T g."""
    s = shift.matrix
    if s.shape[1] != x.rows:
        raise ShapeError(f"spmm: {s.shape} x {x.shape} do not conform")
    out = T.Tensor(s.matmul_dense(x.data))
    st = s.transpose()

    def grad_fn(g):
        return (st.matmul_dense(g),)

    if tape is not None:
        tape.record("spmm", (x,), out, grad_fn)
    return out
