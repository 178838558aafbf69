"""Task-specific graph generators: convex edge-type mixing for heterogeneous
graphs and interatomic distance thresholding for molecules."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import DataError, ShapeError
from .graphs import Graph, SparseMatrix

SIMPLEX_TOL = 1e-12


@dataclass(frozen=True)
class CoordinateSet:
    """Atom positions (angstrom) plus per-atom features for one molecule."""

    positions: np.ndarray  # (num_atoms, 3)
    atom_features: T.Tensor

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] < 1:
            raise ShapeError(f"positions must be (num_atoms, 3), got {pos.shape}")
        if not np.all(np.isfinite(pos)):
            raise DataError("non-finite atom coordinate")
        if self.atom_features.rows != pos.shape[0]:
            raise ShapeError("atom feature rows must match atom count")
        pos = pos.copy()
        pos.flags.writeable = False
        object.__setattr__(self, "positions", pos)

    @property
    def num_atoms(self) -> int:
        return int(self.positions.shape[0])


def mix_adjacency(lambda_vec, layers: list[SparseMatrix]) -> SparseMatrix:
    """Convex combination sum_i lambda_i A_i of per-type adjacencies.

    A coordinate of exactly 0 removes that type's edges entirely (no explicit
    zero entries survive).
    """
    lam = np.asarray(lambda_vec, dtype=np.float64)
    if lam.ndim != 1 or lam.size != len(layers):
        raise ShapeError(
            f"mixing vector length {lam.size} != number of layers {len(layers)}"
        )
    if np.any(lam < 0) or abs(lam.sum() - 1.0) > SIMPLEX_TOL:
        raise DataError("mixing vector must be non-negative and sum to 1")
    shapes = {a.shape for a in layers}
    if len(shapes) != 1:
        raise ShapeError("all edge layers must share the node count")
    (shape,) = shapes
    mixed = SparseMatrix(shape, [], [], [])
    for coeff, adj in zip(lam, layers):
        if coeff == 0.0:
            continue
        mixed = mixed + adj.scaled(float(coeff))
    return mixed


def scalar_to_simplex(lam: float) -> tuple[float, float]:
    """The two-edge-type convention: scalar lam maps to (lam, 1 - lam)."""
    if not 0.0 <= lam <= 1.0:
        raise DataError(f"scalar mixing coordinate {lam} outside [0, 1]")
    return (float(lam), float(1.0 - lam))


def pairwise_distances(coords: CoordinateSet) -> np.ndarray:
    """Symmetric matrix of Euclidean interatomic distances, zero diagonal."""
    pos = coords.positions
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    np.fill_diagonal(dist, 0.0)
    return dist


def threshold_graph(
    coords: CoordinateSet, lam: float, weight_by_inverse_distance: bool = False
) -> Graph:
    """Connect atom pairs with distance in the closed interval [0, lam].

    Edges carry unit weight by default; the inverse-distance mode is an
    off-by-default alternative.
    """
    if lam < 0:
        raise DataError("distance threshold must be non-negative")
    n = coords.num_atoms
    dist = pairwise_distances(coords)
    i, j = np.nonzero((dist <= lam) & ~np.eye(n, dtype=bool))
    if weight_by_inverse_distance:
        if np.any(dist[i, j] == 0.0):
            raise DataError("coincident atoms: inverse-distance weight undefined")
        vals = 1.0 / dist[i, j]
    else:
        vals = np.ones(i.size)
    adj = SparseMatrix((n, n), i, j, vals)
    return Graph(n, [(0, adj)], coords.atom_features)
