"""Metropolis-Hastings sampling of the Gibbs posterior over the latent grid,
plus the exact-enumeration reference used to validate it.

The posterior weight of a grid point is exp(-eta * loss(lam)) * prior(lam)
for the current frozen network weights; the walk proposes +-1 grid steps and
out-of-range proposals keep the chain where it is, which preserves proposal
symmetry at the boundaries.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .distributions import DiscreteDistribution, ParamGrid, empirical
from .errors import ConfigError, NumericError
from .util import parallel_map


@dataclass(frozen=True)
class ChainConfig:
    n_iterations: int = 15000
    burn_in: int = 1000
    thinning: int = 1
    eta: float = 1.0
    seed: int | None = None

    def __post_init__(self):
        if self.eta <= 0:
            raise ConfigError("eta must be positive")
        if not 0 <= self.burn_in < self.n_iterations:
            raise ConfigError("need 0 <= burn_in < n_iterations")
        if self.thinning < 1:
            raise ConfigError("thinning stride must be >= 1")


class LossCache:
    """Memoized per-grid-point losses for one frozen set of weights."""

    def __init__(self, grid: ParamGrid, loss_fn: Callable[[float], float]):
        self.grid = grid
        self._loss_fn = loss_fn
        self._values: dict[int, float] = {}

    def loss_at(self, index: int) -> float:
        val = self._values.get(index)
        if val is None:
            val = float(self._loss_fn(float(self.grid.values[index])))
            if not np.isfinite(val):
                raise NumericError(
                    f"non-finite loss at lambda={self.grid.values[index]}"
                )
            self._values[index] = val
        return val

    def populate(self, workers: int = 1) -> np.ndarray:
        """Evaluate every grid point (optionally fanned out to a thread pool)
        and return the full loss vector."""
        missing = [i for i in range(len(self.grid)) if i not in self._values]
        if missing:
            lams = [float(self.grid.values[i]) for i in missing]
            for i, val in zip(missing, parallel_map(self._loss_fn, lams, workers)):
                if not np.isfinite(val):
                    raise NumericError(
                        f"non-finite loss at lambda={self.grid.values[i]}"
                    )
                self._values[i] = float(val)
        return np.array([self._values[i] for i in range(len(self.grid))])


def _as_cache(grid: ParamGrid, losses) -> LossCache:
    if isinstance(losses, LossCache):
        if losses.grid != grid:
            raise ConfigError("loss cache grid mismatch")
        return losses
    return LossCache(grid, losses)


def gibbs_weight(
    lam: float,
    losses: "LossCache | Callable[[float], float]",
    eta: float,
    prior: DiscreteDistribution,
) -> float:
    """Unnormalized posterior mass exp(-eta * loss) * prior at one point.

    Zero prior mass short-circuits to 0 without evaluating the loss.
    """
    grid = prior.grid
    index = grid.index_of(lam)
    p = prior.prob(index)
    if p == 0.0:
        return 0.0
    cache = _as_cache(grid, losses)
    return float(np.exp(-eta * cache.loss_at(index)) * p)


def run_chain(
    grid: ParamGrid,
    losses: "LossCache | Callable[[float], float]",
    config: ChainConfig,
    prior: DiscreteDistribution,
    rng: np.random.Generator | None = None,
    start: float | None = None,
) -> np.ndarray:
    """Metropolis-Hastings over the grid; returns the post-burn-in, thinned
    chain states as lambda values.

    The initial state is a uniform draw among positive-prior points unless
    ``start`` is given (which must itself have positive prior mass).
    """
    if prior.grid != grid:
        raise ConfigError("prior grid mismatch")
    support = prior.support()
    if support.size == 0:
        raise ConfigError("prior assigns no mass to any grid point")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    cache = _as_cache(grid, losses)

    log_prior = np.full(len(grid), -np.inf)
    log_prior[support] = np.log(prior.mass[support])

    def log_weight(i: int) -> float:
        if log_prior[i] == -np.inf:
            return -np.inf
        return -config.eta * cache.loss_at(i) + log_prior[i]

    if start is None:
        current = int(support[rng.integers(support.size)])
    else:
        current = grid.index_of(start)
        if prior.prob(current) == 0.0:
            raise ConfigError("chain start has zero prior mass")
    current_lw = log_weight(current)

    n = len(grid)
    states = np.empty(config.n_iterations, dtype=np.int64)
    for it in range(config.n_iterations):
        step = 1 if rng.uniform() < 0.5 else -1
        proposed = current + step
        if 0 <= proposed < n:
            prop_lw = log_weight(proposed)
            log_alpha = prop_lw - current_lw
            if log_alpha >= 0.0 or np.log(rng.uniform()) < log_alpha:
                current = proposed
                current_lw = prop_lw
        # out-of-range proposals keep the current state (symmetric kernel)
        states[it] = current

    kept = states[config.burn_in :: config.thinning]
    return grid.values[kept]


def empirical_distribution(samples, grid: ParamGrid) -> DiscreteDistribution:
    """Normalized visit counts per grid point."""
    arr = np.asarray(samples, dtype=np.float64)
    if arr.size == 0:
        raise ConfigError("no samples to build an empirical distribution from")
    counts = np.zeros(len(grid))
    for lam in arr:
        counts[grid.index_of(float(lam))] += 1
    return empirical(grid, counts)


def exact_gibbs(
    grid: ParamGrid,
    losses: "LossCache | Callable[[float], float]",
    eta: float,
    prior: DiscreteDistribution,
) -> DiscreteDistribution:
    """Brute-force normalization of the Gibbs weights over the whole grid,
    log-sum-exp stabilized."""
    if prior.grid != grid:
        raise ConfigError("prior grid mismatch")
    support = prior.support()
    if support.size == 0:
        raise ConfigError("all Gibbs weights are zero (empty prior support)")
    cache = _as_cache(grid, losses)
    log_w = np.full(len(grid), -np.inf)
    for i in support:
        log_w[i] = -eta * cache.loss_at(int(i)) + np.log(prior.prob(int(i)))
    shift = log_w[support].max()
    w = np.zeros(len(grid))
    w[support] = np.exp(log_w[support] - shift)
    return DiscreteDistribution(grid, w / w.sum())


def dump_samples(samples, sink) -> None:
    """One lambda per line, for chain diagnostics."""
    if hasattr(sink, "write"):
        for lam in samples:
            sink.write(f"{float(lam):.10f}\n")
    else:
        with open(sink, "w", encoding="utf-8") as fh:
            dump_samples(samples, fh)
