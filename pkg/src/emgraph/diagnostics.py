"""Internal consistency checks: the log-normalization dominance ratio, the
exact M-step objective, and an empirical probe of the stability of the
importance-weighted descent.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import distributions as D
from . import model as M
from . import training as TR
from .errors import ConfigError


@dataclass(frozen=True)
class LogNormApprox:
    """Pieces of the two-term approximation of the log normalization constant
    of the Gibbs weights: the first-order term -eta * E_p0[loss], the
    second-order correction, and their ratio (NaN when the first-order term
    is zero)."""

    correction: float
    first_order: float
    ratio: float


def rho_ratio(losses, eta: float, p0: D.DiscreteDistribution) -> LogNormApprox:
    """Correction-to-dominant-term ratio for the log normalization constant.

    ``losses`` is the per-grid-point loss vector aligned with p0's grid.  The
    correction is Var(exp(-eta L)) / (2 E[exp(-eta L)]^2) under p0, all by
    exact grid sums.
    """
    lvec = np.asarray(losses, dtype=np.float64)
    if lvec.shape != (len(p0.grid),):
        raise ConfigError("loss vector length must match the grid")
    if p0.is_zero:
        raise ConfigError("ratio needs a prior with positive mass on the grid")
    w = np.exp(-eta * lvec)
    mean_w = float(np.dot(p0.mass, w))
    var_w = float(np.dot(p0.mass, (w - mean_w) ** 2))
    correction = var_w / (2.0 * mean_w**2)
    first_order = float(-eta * np.dot(p0.mass, lvec))
    ratio = correction / first_order if first_order != 0.0 else float("nan")
    return LogNormApprox(correction=correction, first_order=first_order,
                         ratio=ratio)


def objective_exact(losses, p_t: D.DiscreteDistribution,
                    p0: D.DiscreteDistribution) -> float:
    """The M-step objective by exact grid summation:
    sum_lam (p_t - p0)(lam) * loss(lam)."""
    if p_t.grid != p0.grid:
        raise ConfigError("distributions must share a grid")
    lvec = np.asarray(losses, dtype=np.float64)
    if lvec.shape != (len(p_t.grid),):
        raise ConfigError("loss vector length must match the grid")
    return float(np.dot(p_t.mass - p0.mass, lvec))


def nonneg_weight_mass(p_t: D.DiscreteDistribution, p0: D.DiscreteDistribution,
                       q: D.DiscreteDistribution) -> float:
    """Proposal mass of the region where the importance weight is >= 0."""
    keep = p_t.mass >= p0.mass
    return float(q.mass[keep].sum())


def abs_weight_mean(p_t: D.DiscreteDistribution,
                    p0: D.DiscreteDistribution) -> float:
    """E_q |p_t - p0| / q, which reduces to the L1 distance of the masses."""
    return float(np.abs(p_t.mass - p0.mass).sum())


def inverse_proposal_sup(q: D.DiscreteDistribution) -> float:
    """sup over the grid of 1/q; infinite when q misses a grid point."""
    if np.any(q.mass == 0.0):
        return float("inf")
    return float(1.0 / q.mass.min())


@dataclass(frozen=True)
class StabilityProbeConfig:
    """Sweep settings for the empirical stability probe: which per-M-step
    epoch counts to try, how many sample-sequence pairs per count (each pair
    differs in a single resampled position), and the step schedule."""

    epoch_counts: tuple[int, ...]
    n_pairs: int = 20
    a0: float = 0.1
    step_c: float | None = None
    seed: int = 0

    def __post_init__(self):
        if len(set(self.epoch_counts)) < 2:
            raise ConfigError("probe needs at least two distinct epoch counts")
        if self.n_pairs < 1:
            raise ConfigError("probe needs at least one seed pair")


def _run_inner_descent(
    problem: TR.Problem,
    params: M.ModelParams,
    draws: Sequence[float],
    weights_at: Callable[[float], float],
    a0: float,
    step_c: float | None,
) -> tuple[M.ModelParams, list[tuple[float, float]]]:
    """The M-step inner loop on a fixed draw sequence; returns the final
    weights and the (lambda, importance weight) pairs actually used."""
    used = []
    c = a0 if step_c is None else step_c
    for t_prime, lam in enumerate(draws, start=1):
        w = weights_at(lam)
        used.append((lam, w))
        if w == 0.0:
            continue
        _, grads = M.loss_and_grads(lam, problem.data_at(lam), params,
                                    problem.task)
        params = TR._apply_update(params, grads, min(a0, c / t_prime) * w)
    return params, used


def _empirical_objective(grid: D.ParamGrid, losses: np.ndarray,
                         used: list[tuple[float, float]]) -> float:
    total = 0.0
    for lam, w in used:
        total += w * losses[grid.index_of(lam)]
    return total / len(used)


def stability_probe(
    problem: TR.Problem,
    params: M.ModelParams,
    p_t: D.DiscreteDistribution,
    p0: D.DiscreteDistribution,
    q: D.DiscreteDistribution,
    config: StabilityProbeConfig,
) -> list[tuple[int, float]]:
    """Mean gap between the sampled objective and the exact objective at the
    weights the inner descent returns, per epoch count.

    Each pair runs the descent twice on draw sequences differing in one
    uniformly chosen position; the gap of a pair averages the two runs.
    """
    rng = np.random.default_rng(config.seed)
    grid = problem.grid

    def weights_at(lam: float) -> float:
        return (p_t.mass_at(lam) - p0.mass_at(lam)) / q.mass_at(lam)

    rows: list[tuple[int, float]] = []
    for count in config.epoch_counts:
        gaps = []
        for _pair in range(config.n_pairs):
            draws_a = [D.sample(q, rng) for _ in range(count)]
            draws_b = list(draws_a)
            swap = int(rng.integers(count))
            draws_b[swap] = D.sample(q, rng)
            pair_gap = 0.0
            for draws in (draws_a, draws_b):
                theta_hat, used = _run_inner_descent(
                    problem, params, draws, weights_at, config.a0,
                    config.step_c)
                losses = np.array([
                    problem.loss_value(float(lam), theta_hat)
                    for lam in grid.values])
                exact = objective_exact(losses, p_t, p0)
                pair_gap += abs(_empirical_objective(grid, losses, used)
                                - exact)
            gaps.append(pair_gap / 2.0)
        rows.append((count, float(np.mean(gaps))))
    return rows


def loglog_slope(rows: Sequence[tuple[int, float]]) -> float:
    """Least-squares slope of log(gap) against log(epoch count)."""
    x = np.log([r[0] for r in rows])
    y = np.log([max(r[1], 1e-300) for r in rows])
    slope, _intercept = np.polyfit(x, y, 1)
    return float(slope)


def report_distribution(p: D.DiscreteDistribution, sink) -> None:
    """Serialized (lambda, mass) table, lambda ascending."""
    D.write_distribution(p, sink)


def ratio_history(state: TR.TrainState, eta: float,
                  p0: D.DiscreteDistribution) -> list[tuple[int, LogNormApprox]]:
    """The dominance ratio at every recorded iteration of a training run."""
    return [(r.iteration, rho_ratio(r.grid_losses, eta, p0))
            for r in state.history]
