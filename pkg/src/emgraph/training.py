"""The EM loop: pretrain on the observed graph, then alternate MCMC E-steps
estimating the latent posterior with importance-weighted M-step gradient
descent, and infer by averaging the network over the learned distribution.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import distributions as D
from . import model as M
from . import tensor as T
from .errors import ConfigError, NumericError
from .factory import mix_adjacency, scalar_to_simplex, threshold_graph
from .graphs import Graph
from .mcmc import ChainConfig, LossCache, empirical_distribution, run_chain
from .metrics import micro_f1, rmse

VARIANTS = ("PT", "PO", "PD", "PH")
POSTERIOR_PROPOSAL = "posterior"


@dataclass(frozen=True)
class Priors:
    """The three distribution choices steering one run: reference prior p0,
    E-step prior, and M-step proposal (a distribution or the "posterior"
    sentinel meaning q tracks the E-step estimate)."""

    p0: D.DiscreteDistribution
    p0_prime: D.DiscreteDistribution
    q: "D.DiscreteDistribution | str"


def priors_for_variant(variant: str, grid: D.ParamGrid) -> Priors:
    """The four named configurations: PT/PO use a uniform reference prior,
    PD/PH an off-grid delta (zero on the grid); PT/PD propose from the
    current posterior, PO/PH from the uniform distribution."""
    unif = D.uniform(grid)
    zero = D.off_grid_delta(grid)
    table = {
        "PT": Priors(unif, unif, POSTERIOR_PROPOSAL),
        "PO": Priors(unif, unif, unif),
        "PD": Priors(zero, unif, POSTERIOR_PROPOSAL),
        "PH": Priors(zero, unif, unif),
    }
    try:
        return table[variant]
    except KeyError:
        raise ConfigError(f"unknown variant {variant!r}") from None


def validate_support(priors: Priors) -> None:
    """A static proposal must cover the reference prior's support."""
    if isinstance(priors.q, str):
        if priors.q != POSTERIOR_PROPOSAL:
            raise ConfigError(f"unknown proposal sentinel {priors.q!r}")
        return
    p0_support = priors.p0.support()
    if np.any(priors.q.mass[p0_support] == 0.0):
        raise ConfigError("proposal support does not cover the reference prior")


@dataclass(frozen=True)
class TrainConfig:
    grid: D.ParamGrid
    chain: ChainConfig
    variant: str = "PT"
    em_iterations: int = 15
    mstep_epochs: int = 20
    a0: float = 0.5
    step_c: float | None = None  # None -> a0, i.e. pure 1/t' decay after step 1
    pretrain_epochs: int = 100
    pretrain_lr: float | None = None  # None -> a0
    hidden_dim: int = 64
    num_layers: int = 2
    weight_clip: float | None = None  # optional |importance weight| cap
    seed: int = 0

    def __post_init__(self):
        if self.em_iterations < 1 or self.mstep_epochs < 0:
            raise ConfigError("need em_iterations >= 1 and mstep_epochs >= 0")
        if self.a0 <= 0:
            raise ConfigError("a0 must be positive")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.num_layers < 1 or self.hidden_dim < 1:
            raise ConfigError("need num_layers >= 1 and hidden_dim >= 1")

    def step_size(self, t_prime: int) -> float:
        c = self.a0 if self.step_c is None else self.step_c
        return min(self.a0, c / t_prime)


class Problem:
    """Bundles the dataset, task, and grid, and caches the lambda-generated
    graphs (they are deterministic in lambda, so one build per grid point)."""

    def __init__(
        self,
        task: M.TaskSpec,
        grid: D.ParamGrid,
        graph: Graph | None = None,
        molecules: Sequence | None = None,
    ):
        if (graph is None) == (molecules is None):
            raise ConfigError("provide exactly one of graph / molecules")
        if graph is not None and task.kind != M.NODE_CLASSIFICATION:
            raise ConfigError("a single graph needs a node-classification task")
        if molecules is not None and task.kind != M.GRAPH_REGRESSION:
            raise ConfigError("molecule lists need a graph-regression task")
        self.task = task
        self.grid = grid
        self.graph = graph
        self.molecules = list(molecules) if molecules is not None else None
        self._cache: dict[int, object] = {}
        self._observed: object | None = None

    @property
    def feature_dim(self) -> int:
        if self.graph is not None:
            return self.graph.node_features.cols
        return self.molecules[0].atom_features.cols

    @property
    def head_dim(self) -> int:
        if self.task.kind == M.NODE_CLASSIFICATION:
            return int(self.task.num_classes)
        return 1

    @property
    def reference_lambda(self) -> float:
        """Mid-grid latent value used wherever a single fixed graph/weight
        combination is needed (pretraining)."""
        return float(self.grid.values[len(self.grid) // 2])

    def data_at(self, lam: float):
        """The lambda-generated data: a mixed-adjacency graph, or the list of
        per-molecule threshold graphs."""
        index = self.grid.index_of(lam)
        data = self._cache.get(index)
        if data is None:
            value = float(self.grid.values[index])
            if self.graph is not None:
                layers = [adj for _, adj in self.graph.edge_layers]
                if len(layers) != 2:
                    raise ConfigError(
                        "scalar mixing needs exactly two edge layers"
                    )
                mixed = mix_adjacency(scalar_to_simplex(value), layers)
                data = Graph(self.graph.num_nodes, [(0, mixed)],
                             self.graph.node_features)
            else:
                data = [threshold_graph(mol, value) for mol in self.molecules]
            self._cache[index] = data
        return data

    def observed(self):
        """The training data for pretraining: the observed graph with its
        native weights, or the mid-grid threshold graphs for molecules."""
        if self._observed is None:
            if self.graph is not None:
                self._observed = Graph(
                    self.graph.num_nodes,
                    [(0, self.graph.union_adjacency())],
                    self.graph.node_features,
                )
            else:
                self._observed = self.data_at(self.reference_lambda)
        return self._observed

    def loss_value(self, lam: float, params: M.ModelParams,
                   split: str = "train") -> float:
        return M.loss(lam, self.data_at(lam), params, self.task,
                      None, split).item()

    def init_params(self, config: TrainConfig,
                    rng: np.random.Generator) -> M.ModelParams:
        dims = [self.feature_dim] + [config.hidden_dim] * config.num_layers
        return M.init_params(dims, self.head_dim, rng)


@dataclass
class IterationRecord:
    iteration: int
    grid_losses: np.ndarray
    p_mass: np.ndarray
    epoch_losses: list[float]
    train_loss: float
    val_metric: float
    test_metric: float


@dataclass
class TrainState:
    """Everything needed to continue (or replay) a run from iteration t."""

    params: M.ModelParams
    p_t: D.DiscreteDistribution | None
    iteration: int
    history: list[IterationRecord]
    rng: np.random.Generator
    best_params: M.ModelParams | None = None
    best_val: float | None = None
    best_iteration: int | None = None
    pretrain_losses: list[float] = field(default_factory=list)


def _apply_update(params: M.ModelParams, grads: Sequence[T.Tensor],
                  step: float) -> M.ModelParams:
    new_leaves = []
    for p, g in zip(params.leaves(), grads):
        try:
            new_leaves.append(T.Tensor(p.data - step * g.data))
        except NumericError:
            raise NumericError("non-finite parameter update; aborting") from None
    return params.replace_leaves(new_leaves)


def _gd_epochs(
    problem: Problem,
    data,
    lam: float,
    params: M.ModelParams,
    epochs: int,
    step_fn: Callable[[int], float],
) -> tuple[M.ModelParams, list[float]]:
    """Plain full-batch gradient descent at one fixed latent value."""
    losses: list[float] = []
    for epoch in range(1, epochs + 1):
        value, grads = M.loss_and_grads(lam, data, params, problem.task)
        if not np.isfinite(value):
            err = NumericError(f"divergent loss at epoch {epoch}")
            err.history = losses  # type: ignore[attr-defined]
            raise err
        losses.append(value)
        params = _apply_update(params, grads, step_fn(epoch))
    return params, losses


def pretrain(
    problem: Problem,
    params: M.ModelParams,
    epochs: int,
    lr: float,
) -> tuple[M.ModelParams, list[float]]:
    """Full-batch descent on the observed data at the mid-grid latent value;
    zero epochs returns the initialization untouched."""
    return _gd_epochs(problem, problem.observed(), problem.reference_lambda,
                      params, epochs, lambda _epoch: lr)


def fixed_lambda_train(
    problem: Problem,
    lam: float,
    params: M.ModelParams,
    epochs: int,
    step_fn: Callable[[int], float],
) -> tuple[M.ModelParams, list[float]]:
    """The ordinary-GNN reference: descend the loss of the single graph
    generated at ``lam``, with an arbitrary step schedule."""
    return _gd_epochs(problem, problem.data_at(lam), lam, params, epochs, step_fn)


def e_step(
    problem: Problem,
    params: M.ModelParams,
    config: TrainConfig,
    priors: Priors,
    rng: np.random.Generator,
    workers: int = 1,
) -> tuple[D.DiscreteDistribution, np.ndarray, np.ndarray]:
    """Estimate the latent posterior for frozen weights.

    Returns (posterior estimate, per-grid-point train losses, chain samples).
    The loss cache is populated for the whole grid up front: the chain then
    costs dictionary lookups only, and diagnostics get the full loss table.
    """
    cache = LossCache(problem.grid,
                      lambda lam: problem.loss_value(lam, params, "train"))
    grid_losses = cache.populate(workers)
    samples = run_chain(problem.grid, cache, config.chain, priors.p0_prime, rng)
    return empirical_distribution(samples, problem.grid), grid_losses, samples


def m_step(
    problem: Problem,
    params: M.ModelParams,
    p_t: D.DiscreteDistribution,
    config: TrainConfig,
    priors: Priors,
    rng: np.random.Generator,
) -> tuple[M.ModelParams, list[float]]:
    """Stochastic descent of the importance-weighted objective.

    Per epoch: draw lambda from the proposal, weight the gradient of the
    train loss by (p_t - p0)/q at the draw, and step with the non-increasing
    schedule.  A negative weight is an ascent step (a "bad" latent value).
    """
    q = p_t if isinstance(priors.q, str) else priors.q
    epoch_losses: list[float] = []
    for t_prime in range(1, config.mstep_epochs + 1):
        lam = D.sample(q, rng)
        weight = (p_t.mass_at(lam) - priors.p0.mass_at(lam)) / q.mass_at(lam)
        if config.weight_clip is not None:
            weight = float(np.clip(weight, -config.weight_clip,
                                   config.weight_clip))
        value, grads = M.loss_and_grads(lam, problem.data_at(lam), params,
                                        problem.task)
        if not np.isfinite(value):
            raise NumericError(f"non-finite loss at lambda={lam}")
        epoch_losses.append(value)
        if weight != 0.0:
            params = _apply_update(params, grads,
                                   config.step_size(t_prime) * weight)
    return params, epoch_losses


def infer(problem: Problem, params: M.ModelParams,
          p: D.DiscreteDistribution) -> np.ndarray:
    """Expectation-based predictions: average the embeddings over the latent
    distribution, then apply the head.

    Classification returns one class id per node; regression one float per
    graph.
    """
    if problem.task.kind == M.NODE_CLASSIFICATION:
        z_final = D.expectation(
            p, lambda lam: M.forward(lam, problem.data_at(lam), params))
        logits = M.node_logits(z_final, params)
        probs = T.row_softmax(logits)
        return np.argmax(probs.data, axis=1)
    n = len(problem.molecules)
    preds = np.zeros(n)
    for g in range(n):
        z_final = D.expectation(
            p, lambda lam: M.forward(lam, problem.data_at(lam)[g], params))
        preds[g] = M.graph_prediction(z_final, params).item()
    return preds


def evaluate(problem: Problem, params: M.ModelParams,
             p: D.DiscreteDistribution, split: str) -> float:
    """Micro-F1 (classification) or RMSE (regression) on one split; NaN when
    the split is empty."""
    idx = problem.task.indices(split)
    if idx.size == 0:
        return float("nan")
    preds = infer(problem, params, p)
    truth = problem.task.labels[idx]
    if problem.task.kind == M.NODE_CLASSIFICATION:
        return micro_f1(truth, preds[idx], int(problem.task.num_classes))
    return rmse(truth, preds[idx])


def _better(kind: str, candidate: float, incumbent: float | None) -> bool:
    if incumbent is None:
        return True
    if kind == M.NODE_CLASSIFICATION:
        return candidate > incumbent
    return candidate < incumbent


def train(
    problem: Problem,
    config: TrainConfig,
    priors: Priors | None = None,
    initial_params: M.ModelParams | None = None,
    resume: TrainState | None = None,
    workers: int = 1,
    iteration_callback: "Callable[[TrainState, np.ndarray], None] | None" = None,
) -> TrainState:
    """Run the full loop and return the final state.

    The state carries the last weights, the last posterior estimate, the
    per-iteration records, and the validation-selected weights alongside.
    Identical (config, data, seed) reproduce the identical state.
    """
    if priors is None:
        priors = priors_for_variant(config.variant, problem.grid)
    validate_support(priors)

    if resume is not None:
        state = resume
        start = state.iteration + 1
    else:
        rng = np.random.default_rng(config.seed)
        params = (initial_params if initial_params is not None
                  else problem.init_params(config, rng))
        params, pre_losses = pretrain(
            problem, params, config.pretrain_epochs,
            config.a0 if config.pretrain_lr is None else config.pretrain_lr)
        state = TrainState(params=params, p_t=None, iteration=0, history=[],
                           rng=rng, pretrain_losses=pre_losses)
        start = 1

    for t in range(start, config.em_iterations + 1):
        p_t, grid_losses, samples = e_step(problem, state.params, config,
                                           priors, state.rng, workers)
        new_params, epoch_losses = m_step(problem, state.params, p_t, config,
                                          priors, state.rng)
        state.params = new_params
        state.p_t = p_t
        state.iteration = t
        train_loss = float(np.dot(p_t.mass, grid_losses))
        val = evaluate(problem, state.params, p_t, "val")
        test = evaluate(problem, state.params, p_t, "test")
        state.history.append(IterationRecord(
            iteration=t, grid_losses=grid_losses, p_mass=p_t.mass.copy(),
            epoch_losses=epoch_losses, train_loss=train_loss,
            val_metric=val, test_metric=test))
        if not np.isnan(val) and _better(problem.task.kind, val, state.best_val):
            state.best_val = val
            state.best_params = state.params
            state.best_iteration = t
        if iteration_callback is not None:
            iteration_callback(state, samples)
    return state


def clone_state(state: TrainState) -> TrainState:
    """Deep-enough copy for checkpoint round-trip tests."""
    dup = copy.copy(state)
    dup.history = [replace(r) for r in state.history]
    fresh = np.random.default_rng()
    fresh.bit_generator.state = state.rng.bit_generator.state
    dup.rng = fresh
    return dup
