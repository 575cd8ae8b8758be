"""Monte Carlo search for affine metamorphic relations.

One *descent* draws a batch of random inputs, starts from a random
perturbation of the identity and repeatedly proposes mutations of the
coefficients.  Improving proposals are always accepted and non-improving ones
with a fixed probability ``p_accept``.  The step size halves whenever
``stagnation_window`` proposals go by without a new best.  A descent stops
when the best cost drops below ``epsilon_converge`` or the iteration budget is
spent, and returns its best-so-far candidate.

:func:`discover` chains descents.  Every converged candidate is validated on
fresh inputs; passing ones are recorded and join the priors, so later
descents are pushed away from them by the cost denominator.

Random streams: descent ``k`` of a run with seed ``s`` draws everything from
``numpy.random.default_rng([s, k])`` and validates with
``default_rng([s, k, 1])``.  Descents are therefore independent of each other
given their index, which keeps results identical however they are scheduled.
"""
from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .cost import (DEFAULT_N_HOLDOUT, DEFAULT_TOL_VALIDATE, BatchCost, _check_priors,
                   default_delta_distinct, validate)
from .exceptions import ConfigurationError
from .kernel import DISCOVERY_GRID, GridDims, SamplingRanges, get_kernel, random_states
from .relations import SPACES, AffineRelation, SignedPermScale, identity, to_document

RESULT_SCHEMA = "morphoseek-result/1"
MAX_START_DRAWS = 100


@dataclass(frozen=True)
class SearchConfig:
    space: str = "diagonal"
    dims: GridDims = DISCOVERY_GRID
    batch_size: int = 8
    max_iterations: int = 200_000
    p_accept: float = 0.02
    sigma_init: float = 0.5
    sigma_mut: float = 0.1
    k_mut: float = 2.0
    stagnation_window: int = 5000
    sigma_floor: float = 1e-6
    epsilon_converge: float = 1e-10
    max_relations: int = 4
    max_restarts: int = 50
    seed: int = 0
    # total proposal budget across all descents; None means unlimited
    max_evaluations: int | None = None
    structured_prob: float = 0.2
    n_holdout: int = DEFAULT_N_HOLDOUT
    tol_validate: float = DEFAULT_TOL_VALIDATE
    delta_distinct: float | None = None
    ranges: SamplingRanges = field(default_factory=SamplingRanges)
    trace_every: int = 1000

    def __post_init__(self):
        if isinstance(self.dims, str):
            object.__setattr__(self, "dims", GridDims.parse(self.dims))
        if self.space not in SPACES:
            raise ConfigurationError(f"space must be one of {SPACES}, got {self.space!r}")
        for name in ("batch_size", "max_iterations", "stagnation_window", "n_holdout", "trace_every"):
            if int(getattr(self, name)) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        for name in ("max_relations", "max_restarts"):
            if int(getattr(self, name)) < 0:
                raise ConfigurationError(f"{name} must be >= 0")
        if self.max_evaluations is not None and self.max_evaluations < 0:
            raise ConfigurationError("max_evaluations must be >= 0")
        if not 0 <= self.p_accept <= 1:
            raise ConfigurationError("p_accept must lie in [0, 1]")
        if not 0 <= self.structured_prob <= 1:
            raise ConfigurationError("structured_prob must lie in [0, 1]")
        if self.k_mut < 1:
            raise ConfigurationError("k_mut must be >= 1")
        for name in ("sigma_mut", "sigma_floor", "epsilon_converge", "tol_validate"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be > 0")
        if self.sigma_init < 0:
            raise ConfigurationError("sigma_init must be >= 0")

    @property
    def distinct_threshold(self) -> float:
        return default_delta_distinct(self.dims) if self.delta_distinct is None else self.delta_distinct

    def as_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["dims"] = self.dims.as_dict()
        out["ranges"] = {k: list(v) if isinstance(v, tuple) else v for k, v in out["ranges"].items()}
        return out


@dataclass
class SearchResult:
    relations: list
    traces: list
    stats: dict
    config: SearchConfig | None = None

    def to_document(self) -> dict:
        # wall time is left out so that identical configs give identical files
        stats = {k: v for k, v in self.stats.items() if k != "wall_time"}
        return {
            "schema": RESULT_SCHEMA,
            "config": self.config.as_dict() if self.config is not None else None,
            "relations": [to_document(r) for r in self.relations],
            "traces": self.traces,
            "stats": stats,
        }


# -- candidate encoding ---------------------------------------------------------
#
# A candidate is held as one flat float vector ``theta`` of its continuous
# coefficients plus, in signed-perm-scale space, the ssh permutation.
#   dense:             alpha (D*D, row-major), beta (D)
#   diagonal:          alpha (D), beta (D)
#   signed-perm-scale: ssh_scale (n), param_scale (4), beta (D)

def _identity_theta(space, dims):
    D, n = dims.size, dims.n_ssh
    if space == "dense":
        return np.concatenate([np.eye(D).ravel(), np.zeros(D)])
    if space == "diagonal":
        return np.concatenate([np.ones(D), np.zeros(D)])
    return np.concatenate([np.ones(n + 4), np.zeros(D)])


def _encode(rel: AffineRelation):
    if rel.space == "signed-perm-scale":
        a = rel.alpha
        if not np.array_equal(a.param_perm, np.arange(4)):
            raise ConfigurationError("search does not mutate relations with a parameter permutation")
        return np.concatenate([a.ssh_scale, a.param_scale, rel.beta]), np.array(a.ssh_perm)
    return np.concatenate([np.ravel(rel.alpha), rel.beta]), None


def _decode(space, dims, theta, perm=None, meta=None) -> AffineRelation:
    D, n = dims.size, dims.n_ssh
    beta = theta[-D:]
    if space == "dense":
        alpha = theta[: D * D].reshape(D, D)
    elif space == "diagonal":
        alpha = theta[:D]
    else:
        alpha = SignedPermScale(perm, theta[:n], theta[n: n + 4])
    return AffineRelation(dims, space, alpha, beta, meta or {})


class _Images:
    """Fast image of a fixed batch under an encoded candidate."""

    def __init__(self, space, dims, batch):
        self.space, self.dims, self.batch = space, dims, batch
        self.n = dims.n_ssh

    def __call__(self, theta, perm):
        D, n, X = self.dims.size, self.n, self.batch
        if self.space == "dense":
            return X @ theta[: D * D].reshape(D, D).T + theta[D * D:]
        if self.space == "diagonal":
            return X * theta[:D] + theta[D:]
        out = np.empty_like(X)
        out[:, perm] = X[:, :n] * theta[:n]
        out[:, n:] = X[:, n:] * theta[n: n + 4]
        return out + theta[n + 4:]


def _perturb(theta, perm, space, rng, sigma, k_mut, structured_prob, identity_theta, n_beta):
    theta = theta.copy()
    if rng.random() < structured_prob:
        if space == "signed-perm-scale":
            return _permutation_move(theta, perm, rng)
        return _gene_move(theta, identity_theta, n_beta, rng), perm
    k = min(int(rng.geometric(1.0 / k_mut)), theta.shape[0])
    idx = rng.choice(theta.shape[0], size=k, replace=False)
    theta[idx] += rng.normal(0.0, sigma, size=k)
    if space == "signed-perm-scale":
        n = perm.shape[0]
        scales = theta[n: n + 4]
        scales[scales == 0] = np.finfo(float).tiny
    return theta, perm


def _permutation_move(theta, perm, rng):
    perm = perm.copy()
    n = perm.shape[0]
    if rng.random() < 0.5:
        a, b = rng.choice(n, size=2, replace=False)
        perm[a], perm[b] = perm[b], perm[a]
    else:
        k = rng.integers(n + 4)
        theta[k] = -theta[k]
    return theta, perm


def _gene_move(theta, identity_theta, n_beta, rng):
    """Discrete move on a dense or diagonal candidate.

    One of, with equal probability: reset a coefficient to its identity value;
    overwrite it with another coefficient of the same half (alpha or beta);
    flip its sign; or snap every coefficient lying within a random
    log-uniform distance (1e-8 to 1) of its identity value, or of the negated
    identity value, onto that value.
    """
    size = theta.shape[0]
    k = int(rng.integers(size))
    move = rng.integers(4)
    if move == 0:
        theta[k] = identity_theta[k]
    elif move == 1:
        lo, hi = (size - n_beta, size) if k >= size - n_beta else (0, size - n_beta)
        theta[k] = theta[rng.integers(lo, hi)]
    elif move == 2:
        theta[k] = -theta[k]
    else:
        radius = 10.0 ** rng.uniform(-8, 0)
        near = np.abs(theta - identity_theta) < radius
        theta[near] = identity_theta[near]
        near = np.abs(theta + identity_theta) < radius
        theta[near] = -identity_theta[near]
    return theta


def init_params(space: str, dims: GridDims, rng, sigma_init: float) -> AffineRelation:
    """Identity coefficients plus Gaussian noise of scale ``sigma_init``."""
    rng = np.random.default_rng(rng)
    theta = _identity_theta(space, dims)
    theta = theta + rng.normal(0.0, sigma_init, size=theta.shape) if sigma_init > 0 else theta
    perm = np.arange(dims.n_ssh) if space == "signed-perm-scale" else None
    if perm is not None:
        scales = theta[dims.n_ssh: dims.n_ssh + 4]
        scales[scales == 0] = np.finfo(float).tiny
    return _decode(space, dims, theta, perm)


def mutate(rel: AffineRelation, rng, sigma_mut: float, k_mut: float = 2.0,
           structured_prob: float = 0.2) -> AffineRelation:
    """Copy of ``rel`` with a random subset of coefficients perturbed.

    ``K >= 1`` coefficients (geometric, mean ``k_mut``) chosen uniformly among
    alpha and beta receive ``N(0, sigma_mut)`` noise.  With probability
    ``structured_prob`` the move is discrete instead: in signed-perm-scale
    space a swap of two permutation targets or a sign flip of one scale
    entry, otherwise one of the moves of :func:`_gene_move`.
    """
    theta, perm = _encode(rel)
    theta, perm = _perturb(theta, perm, rel.space, rng, sigma_mut, k_mut, structured_prob,
                           _identity_theta(rel.space, rel.dims), rel.dims.size)
    return _decode(rel.space, rel.dims, theta, perm, rel.meta)


def accept(cost_current: float, cost_proposed: float, p_accept: float, rng) -> bool:
    """Accept improvements always, anything else finite with probability ``p_accept``."""
    if cost_proposed < cost_current:
        return True
    if math.isinf(cost_proposed) or math.isnan(cost_proposed):
        return False
    return bool(rng.random() < p_accept)


@dataclass
class Descent:
    relation: AffineRelation
    cost: float
    trace: list
    n_evaluations: int
    n_accepted_worse: int = 0
    # True when the descent ended in a local minimum rather than on budget
    stalled: bool = False


def minimize(f, priors, config: SearchConfig, rng, max_evaluations=None) -> Descent:
    """One descent from a random start; returns the best candidate seen."""
    rng = np.random.default_rng(rng)
    dims, space = config.dims, config.space
    _check_priors(identity(dims, space), priors)
    budget = config.max_iterations if max_evaluations is None else min(config.max_iterations, max_evaluations)
    batch = random_states(dims, config.batch_size, config.ranges, rng)
    cost_of = BatchCost(priors, batch, f, dims)
    images = _Images(space, dims, batch)

    def evaluate(theta, perm):
        costs = cost_of.costs_of_image(images(theta, perm))
        return math.inf if np.any(np.isinf(costs)) else float(np.mean(costs))

    identity_theta = _identity_theta(space, dims)
    if budget <= 0:
        return Descent(init_params(space, dims, rng, config.sigma_init), math.inf, [], 0)
    # redraw starts that leave the kernel domain; single-coefficient moves
    # rarely find their way back from there
    n_eval = 0
    current = math.inf
    while math.isinf(current) and n_eval < min(budget, MAX_START_DRAWS):
        theta, perm = _encode(init_params(space, dims, rng, config.sigma_init))
        current = evaluate(theta, perm)
        n_eval += 1
    best_theta, best_perm, best = theta, perm, current
    sigma = config.sigma_mut
    stagnant = 0
    worse = 0
    trace = [[0, best]]
    iteration = 0
    stuck = False
    while n_eval < budget and not best < config.epsilon_converge:
        iteration += 1
        prop_theta, prop_perm = _perturb(theta, perm, space, rng, sigma, config.k_mut, config.structured_prob,
                                         identity_theta, dims.size)
        proposed = evaluate(prop_theta, prop_perm)
        n_eval += 1
        if accept(current, proposed, config.p_accept, rng):
            if not proposed < current:
                worse += 1
            theta, perm, current = prop_theta, prop_perm, proposed
        if proposed < best:
            best_theta, best_perm, best = prop_theta, prop_perm, proposed
            stagnant = 0
        elif math.isfinite(best):
            stagnant += 1
            if stagnant >= config.stagnation_window:
                if sigma <= config.sigma_floor:
                    stuck = True
                    break
                sigma = max(sigma / 2, config.sigma_floor)
                stagnant = 0
        if iteration % config.trace_every == 0:
            trace.append([iteration, best])
    if trace[-1][0] != iteration:
        trace.append([iteration, best])
    rel = _decode(space, dims, best_theta, best_perm)
    return Descent(rel, best, trace, n_eval, worse, stuck)


def discover(f, config: SearchConfig) -> SearchResult:
    """Chain descents until ``max_relations`` are recorded or restarts run out."""
    t0 = time.perf_counter()
    dims, space = config.dims, config.space
    priors = [identity(dims, space)]
    relations, traces = [], []
    evaluations = failures = descents = 0
    budget = config.max_evaluations
    while len(relations) < config.max_relations and failures < config.max_restarts:
        remaining = None if budget is None else budget - evaluations
        if remaining is not None and remaining <= 0:
            break
        k = descents
        descents += 1
        run = minimize(f, priors, config, np.random.default_rng([config.seed, k]), remaining)
        evaluations += run.n_evaluations
        entry = {"descent": k, "cost": _json_cost(run.cost), "evaluations": run.n_evaluations,
                 "trace": [[i, _json_cost(c)] for i, c in run.trace], "recorded": False}
        if run.cost < config.epsilon_converge:
            report = validate(run.relation, priors, f, np.random.default_rng([config.seed, k, 1]),
                              config.n_holdout, config.tol_validate, config.distinct_threshold, config.ranges)
            entry["validation"] = report.as_dict()
            if report.passed:
                rel = run.relation.with_meta(
                    name=f"discovered-{len(relations) + 1}", seed=config.seed, cost=run.cost,
                    iterations=run.n_evaluations, descent=k, max_rel_err=report.max_rel_err,
                )
                relations.append(rel)
                priors.append(rel)
                entry["recorded"] = True
        if not entry["recorded"]:
            failures += 1
        traces.append(entry)
    stats = {"descents": descents, "restarts": failures, "evaluations": evaluations,
             "wall_time": time.perf_counter() - t0}
    return SearchResult(relations, traces, stats, config)


def _json_cost(c: float):
    return None if math.isinf(c) else c


class RelationSearch(BaseEstimator):
    """Estimator front end to :func:`discover`.

    ``fit`` runs the search against the chosen kernel; the validated
    relations are available as ``relations_`` and ``transform`` maps rows of
    flattened states through each of them.

    Parameters mirror :class:`SearchConfig`; ``grid`` is a ``"TxNYxNX"``
    string and ``kernel`` is ``"cyclic"`` or ``"noncyclic"``.
    """

    def __init__(self, kernel="cyclic", grid="2x4x4", space="diagonal", batch_size=8,
                 max_iterations=200_000, p_accept=0.02, sigma_init=0.5, sigma_mut=0.1, k_mut=2.0,
                 stagnation_window=5000, sigma_floor=1e-6, epsilon_converge=1e-10, max_relations=4,
                 max_restarts=50, max_evaluations=None, n_holdout=DEFAULT_N_HOLDOUT,
                 tol_validate=DEFAULT_TOL_VALIDATE, random_state=0):
        self.kernel = kernel
        self.grid = grid
        self.space = space
        self.batch_size = batch_size
        self.max_iterations = max_iterations
        self.p_accept = p_accept
        self.sigma_init = sigma_init
        self.sigma_mut = sigma_mut
        self.k_mut = k_mut
        self.stagnation_window = stagnation_window
        self.sigma_floor = sigma_floor
        self.epsilon_converge = epsilon_converge
        self.max_relations = max_relations
        self.max_restarts = max_restarts
        self.max_evaluations = max_evaluations
        self.n_holdout = n_holdout
        self.tol_validate = tol_validate
        self.random_state = random_state

    def _config(self) -> SearchConfig:
        params = self.get_params()
        kernel, grid, seed = params.pop("kernel"), params.pop("grid"), params.pop("random_state")
        if not isinstance(seed, (int, np.integer)):
            raise ConfigurationError("random_state must be an integer seed")
        dims = grid if isinstance(grid, GridDims) else GridDims.parse(grid)
        get_kernel(kernel)
        return SearchConfig(dims=dims, seed=int(seed), **params)

    def fit(self, X=None, y=None):
        """Run the search.  ``X`` and ``y`` are ignored."""
        config = self._config()
        self.result_ = discover(get_kernel(self.kernel), config)
        self.relations_ = list(self.result_.relations)
        self.n_evaluations_ = self.result_.stats["evaluations"]
        self.n_features_in_ = config.dims.size
        return self

    def transform(self, X):
        """Images of the rows of ``X``; shape (n_relations, n_samples, D)."""
        check_is_fitted(self, "relations_")
        from .kernel import check_states

        X = check_states(X, self._config().dims)
        return np.stack([r.apply(X) for r in self.relations_]) if self.relations_ else np.empty((0,) + X.shape)
