"""The discretized latent sample space and probability mass functions on it.

Grids are strictly increasing scalar lattices; two-edge-type mixing is
parametrized by the scalar coordinate (the mixing vector is (lam, 1 - lam)).
Distributions are immutable masses over a grid.  A special all-zero "mass"
object represents a point mass at an off-grid value: it evaluates to zero
everywhere on the grid and is only valid as a reference prior.
"""
from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from .errors import ConfigError
from .tensor import Tensor

GRID_TOL = 1e-9


class ParamGrid:
    """Ordered scalar lattice of latent values."""

    __slots__ = ("values",)

    def __init__(self, values):
        vals = np.asarray(values, dtype=np.float64)
        if vals.ndim != 1 or vals.size == 0:
            raise ConfigError("grid needs a non-empty 1-D value list")
        if np.any(np.diff(vals) <= 0):
            raise ConfigError("grid values must be strictly increasing")
        vals = vals.copy()
        vals.flags.writeable = False
        self.values = vals

    def __len__(self) -> int:
        return int(self.values.size)

    def __iter__(self):
        return iter(self.values)

    def __eq__(self, other) -> bool:
        return isinstance(other, ParamGrid) and np.array_equal(
            self.values, other.values
        )

    def __hash__(self):
        return hash(self.values.tobytes())

    def index_of(self, lam: float) -> int:
        i = int(np.searchsorted(self.values, lam))
        for j in (i - 1, i, i + 1):
            if 0 <= j < len(self) and abs(self.values[j] - lam) <= GRID_TOL:
                return j
        raise KeyError(f"value {lam} is not a grid point")


def make_grid(lo: float, hi: float, step: float) -> ParamGrid:
    """Lattice {lo, lo+step, ...}; hi is included when (hi-lo)/step is
    integral within 1e-9."""
    if step <= 0:
        raise ConfigError("grid step must be positive")
    if not lo < hi:
        raise ConfigError("grid needs lo < hi")
    span = (hi - lo) / step
    count = int(np.floor(span + GRID_TOL)) + 1
    values = lo + step * np.arange(count)
    # guard against accumulated round-off pushing the last point past hi
    values = values[values <= hi + GRID_TOL]
    return ParamGrid(values)


def simplex_lattice(omega: int, step: float) -> list[tuple[float, ...]]:
    """All mixing vectors with omega non-negative coordinates summing to 1,
    each a multiple of ``step``.  Requires 1/step integral."""
    if omega < 2:
        raise ConfigError("simplex needs at least two coordinates")
    ticks = round(1.0 / step)
    if abs(ticks * step - 1.0) > GRID_TOL:
        raise ConfigError("simplex step must divide 1 evenly")

    points: list[tuple[float, ...]] = []

    def fill(prefix: list[int], remaining: int, slots: int):
        if slots == 1:
            points.append(tuple((k * step) for k in prefix + [remaining]))
            return
        for k in range(remaining + 1):
            fill(prefix + [k], remaining - k, slots - 1)

    fill([], ticks, omega)
    return points


class DiscreteDistribution:
    """Probability masses over a ParamGrid.

    ``is_zero`` marks the formal off-grid point mass: zero at every grid
    point.  Sampling from it is rejected; evaluating it is fine.
    """

    __slots__ = ("grid", "mass")

    def __init__(self, grid: ParamGrid, mass):
        m = np.asarray(mass, dtype=np.float64)
        if m.shape != (len(grid),):
            raise ConfigError("mass vector length must match grid size")
        if np.any(m < 0):
            raise ConfigError("negative probability mass")
        total = m.sum()
        if total != 0.0 and abs(total - 1.0) > 1e-10:
            raise ConfigError(f"mass must sum to 1 (got {total!r})")
        m = m.copy()
        m.flags.writeable = False
        self.grid = grid
        self.mass = m

    @property
    def is_zero(self) -> bool:
        return bool(self.mass.sum() == 0.0)

    def prob(self, index: int) -> float:
        return float(self.mass[index])

    def mass_at(self, lam: float) -> float:
        return float(self.mass[self.grid.index_of(lam)])

    def support(self) -> np.ndarray:
        return np.flatnonzero(self.mass > 0.0)


def uniform(grid: ParamGrid) -> DiscreteDistribution:
    return DiscreteDistribution(grid, np.full(len(grid), 1.0 / len(grid)))


def off_grid_delta(grid: ParamGrid) -> DiscreteDistribution:
    """Point mass at some value outside the grid: evaluates to 0 on every
    grid point.  Valid only as a reference prior, never for sampling."""
    return DiscreteDistribution(grid, np.zeros(len(grid)))


def point_mass(grid: ParamGrid, lam: float) -> DiscreteDistribution:
    mass = np.zeros(len(grid))
    mass[grid.index_of(lam)] = 1.0
    return DiscreteDistribution(grid, mass)


def empirical(grid: ParamGrid, counts) -> DiscreteDistribution:
    c = np.asarray(counts, dtype=np.float64)
    if c.shape != (len(grid),):
        raise ConfigError("counts length must match grid size")
    if np.any(c < 0):
        raise ConfigError("negative count")
    total = c.sum()
    if total == 0:
        raise ConfigError("empirical distribution needs at least one count")
    return DiscreteDistribution(grid, c / total)


def sample(dist: DiscreteDistribution, rng: np.random.Generator) -> float:
    """Inverse-CDF draw of a grid value."""
    if dist.is_zero:
        raise ConfigError("cannot sample from the off-grid zero-density object")
    cdf = np.cumsum(dist.mass)
    i = int(np.searchsorted(cdf, rng.uniform(), side="right"))
    i = min(i, len(dist.grid) - 1)
    return float(dist.grid.values[i])


def expectation(dist: DiscreteDistribution, fn: Callable[[float], "Tensor | np.ndarray | float"]):
    """Sum of mass(lam) * fn(lam) over the support.

    Accepts fn returning Tensor, ndarray, or float; returns the same kind.
    """
    total = None
    tensor_out = False
    for i in dist.support():
        lam = float(dist.grid.values[i])
        val = fn(lam)
        if isinstance(val, Tensor):
            tensor_out = True
            val = val.data
        piece = dist.mass[i] * np.asarray(val, dtype=np.float64)
        total = piece if total is None else total + piece
    if total is None:
        raise ConfigError("expectation over an empty support")
    if tensor_out:
        return Tensor(total)
    return float(total) if total.ndim == 0 else total


def tv_distance(d1: DiscreteDistribution, d2: DiscreteDistribution) -> float:
    """Half the L1 distance; requires identical grids."""
    if d1.grid != d2.grid:
        raise ConfigError("total-variation distance needs a common grid")
    return float(0.5 * np.abs(d1.mass - d2.mass).sum())


def write_distribution(dist: DiscreteDistribution, sink) -> None:
    """Two-column table ``lambda<TAB>mass`` with 10 decimal places, lambda
    ascending.  ``sink`` is a path or open text file."""
    if hasattr(sink, "write"):
        _write_rows(dist, sink)
    else:
        with open(sink, "w", encoding="utf-8") as fh:
            _write_rows(dist, fh)


def _write_rows(dist: DiscreteDistribution, fh) -> None:
    for lam, m in zip(dist.grid.values, dist.mass):
        fh.write(f"{lam:.10f}\t{m:.10f}\n")


def read_distribution(source, grid: ParamGrid | None = None) -> DiscreteDistribution:
    rows: list[tuple[float, float]] = []
    if hasattr(source, "read"):
        lines: Iterable[str] = source.read().splitlines()
    else:
        with open(source, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    for line in lines:
        if not line.strip():
            continue
        lam_s, mass_s = line.split("\t")
        rows.append((float(lam_s), float(mass_s)))
    values = [r[0] for r in rows]
    masses = np.array([r[1] for r in rows])
    if grid is None:
        grid = ParamGrid(values)
    total = masses.sum()
    if total > 0:
        masses = masses / total
    return DiscreteDistribution(grid, masses)
